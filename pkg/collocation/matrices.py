"""Collocation operators built on an LGL rule, and checks of their identities."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from numpy.polynomial import Legendre
from numpy.polynomial.legendre import legvander
from scipy.linalg import lu_factor, lu_solve

from collocation.errors import OperatorConstructionError
from collocation.lgl_basis import QuadratureRule, differentiation_matrix, lgl_rule
from utils.config import MIN_EXTRA_DISTANCE

_ALPHA_TOLERANCE = 1e-11


@dataclass(frozen=True)
class CollocationOperators:
    """The operator family for one LGL rule and one extra point."""

    rule: QuadratureRule
    A: np.ndarray
    A_tilde: np.ndarray
    E: np.ndarray
    alpha: np.ndarray
    A_dag: np.ndarray
    D_dag: np.ndarray
    D_ddag: np.ndarray
    tau_extra: float
    B: np.ndarray
    D_ext: np.ndarray

    @property
    def n(self) -> int:
        return self.rule.n

    @property
    def extra_row(self) -> np.ndarray:
        """Quadrature row integrating from -1 to tau_extra."""
        return self.B[-1]


def _coefficient_matrix(rule: QuadratureRule) -> np.ndarray:
    """Legendre coefficients of each Lagrange basis polynomial (columns)."""
    n = rule.n
    V = legvander(rule.nodes, n - 1)
    norms = 2.0 / (2.0 * np.arange(n) + 1.0)
    # discrete norm of P_{N-1} under LGL quadrature
    norms[-1] = 2.0 / (n - 1)
    return (V.T * rule.weights[None, :]) / norms[:, None]


def integration_rows(rule: QuadratureRule, points) -> np.ndarray:
    """
    Rows r(t) with r(t) . f = integral from -1 to t of the interpolant of f.

    Each Lagrange polynomial is expanded in Legendre polynomials and
    integrated with (P_{n+1} - P_{n-1}) / (2n + 1).

    Args:
        rule: Quadrature rule supplying the support points
        points: Upper integration limits in [-1, 1]

    Returns:
        Array of shape (len(points), N)
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = rule.n
    P = legvander(points, n)
    Q = np.empty((points.size, n))
    Q[:, 0] = points + 1.0
    k = np.arange(1, n)
    Q[:, 1:] = (P[:, k + 1] - P[:, k - 1]) / (2.0 * k + 1.0)
    return Q @ _coefficient_matrix(rule)


def build_A(rule: QuadratureRule) -> np.ndarray:
    """
    Integration matrix A_ij = integral from -1 to tau_i of L_j.

    Args:
        rule: Quadrature rule

    Returns:
        N x N matrix with a zero first row and the weights as last row
    """
    A = integration_rows(rule, rule.nodes)
    A[0] = 0.0
    return A


def _block_factor(A_tilde: np.ndarray):
    return lu_factor(A_tilde[:, 1:])


def build_alpha(rule: QuadratureRule, A_tilde: np.ndarray) -> np.ndarray:
    """
    Coefficients alpha = inv(A_tilde[:, 2:N]) A_tilde[:, 1].

    The linear solve is cross-checked against the closed form
    alpha_j = -P_{N-1}(tau_j) / P_{N-1}(tau_1); the closed form is returned.

    Raises:
        OperatorConstructionError: If the two values disagree
    """
    n = rule.n
    solved = lu_solve(_block_factor(A_tilde), A_tilde[:, 0])

    p = legvander(rule.nodes, n - 1)[:, -1]
    closed = -p[1:] / p[0]

    cond = np.linalg.cond(A_tilde[:, 1:])
    tolerance = max(_ALPHA_TOLERANCE, 10.0 * np.finfo(float).eps * cond * np.max(np.abs(closed)))
    gap = np.max(np.abs(solved - closed))
    if gap > tolerance:
        raise OperatorConstructionError(
            f"alpha closed form disagrees with linear solve for N={n}: {gap:.3e} > {tolerance:.3e}"
        )
    return closed


def build_E(A_tilde: np.ndarray) -> np.ndarray:
    """E = inv(A_tilde[:, 2:N]) [-1 | I]."""
    m = A_tilde.shape[0]
    rhs = np.hstack([-np.ones((m, 1)), np.eye(m)])
    return lu_solve(_block_factor(A_tilde), rhs)


def build_A_dag(rule: QuadratureRule, A: np.ndarray) -> np.ndarray:
    """A_dag_ij = w_j - (w_j / w_i)(1 - delta_Ni) A_ji."""
    w = rule.weights
    A_dag = w[None, :] - (w[None, :] / w[:, None]) * A.T
    A_dag[-1] = w
    return A_dag


def build_D_dag(rule: QuadratureRule, E: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """
    N x (N-1) matrix acting on the costate at nodes 2..N.

    Row 1:   -(w_{j+1} / w_1) E_j1 - (w_{j+1} / w_1^2) alpha_j
    Row i>1: -(w_{j+1} / w_i) E_ji, plus 1 / w_N in the last entry.
    """
    w = rule.weights
    D_dag = -(w[None, 1:] / w[:, None]) * E.T
    D_dag[0] -= (w[1:] / w[0] ** 2) * alpha
    D_dag[-1, -1] += 1.0 / w[-1]
    return D_dag


def build_D_ddag(A_dag: np.ndarray) -> np.ndarray:
    """
    D_ddag = inv(A_dag) [[0, 0], [-1, I]].

    Raises:
        OperatorConstructionError: If A_dag is singular
    """
    n = A_dag.shape[0]
    lu, piv = lu_factor(A_dag)
    if np.any(np.diag(lu) == 0.0):
        raise OperatorConstructionError(f"A_dag is singular for N={n}")
    rhs = np.zeros((n, n))
    rhs[1:, 0] = -1.0
    rhs[1:, 1:] = np.eye(n - 1)
    return lu_solve((lu, piv), rhs)


def default_tau_extra(rule: QuadratureRule) -> float:
    """Midpoint of the widest gap between adjacent nodes (first one on ties)."""
    gaps = np.diff(rule.nodes)
    k = int(np.argmax(gaps))
    return float(0.5 * (rule.nodes[k] + rule.nodes[k + 1]))


def validate_tau_extra(rule: QuadratureRule, tau_extra: float):
    """
    Raises:
        ValueError: If tau_extra is outside (-1, 1) or too close to a node
    """
    if not -1.0 < tau_extra < 1.0:
        raise ValueError(f"tau_extra must lie in (-1, 1), got {tau_extra}")
    distance = np.min(np.abs(rule.nodes - tau_extra))
    if distance < MIN_EXTRA_DISTANCE:
        raise ValueError(
            f"tau_extra={tau_extra} is within {distance:.1e} of an LGL node"
        )


def build_B(rule: QuadratureRule, A: np.ndarray, tau_extra: float) -> np.ndarray:
    """
    Rows 2..N of A stacked on the quadrature row to tau_extra.

    Raises:
        ValueError: If tau_extra coincides with a node
    """
    validate_tau_extra(rule, tau_extra)
    return np.vstack([A[1:], integration_rows(rule, [tau_extra])])


def build_D_extended(rule: QuadratureRule, tau_extra: float) -> np.ndarray:
    """
    Derivative form on N LGL points plus tau_extra (appended last).

    Returns the N x (N+1) matrix differentiating the degree-N interpolant
    through all N+1 points, evaluated at the LGL points.
    """
    validate_tau_extra(rule, tau_extra)
    points = np.append(rule.nodes, tau_extra)
    return differentiation_matrix(points)[: rule.n]


def build_operators(rule: QuadratureRule, tau_extra: Optional[float] = None) -> CollocationOperators:
    """
    Build the full operator family for a rule.

    Args:
        rule: Quadrature rule
        tau_extra: Extra point for B; defaults to the widest-gap midpoint

    Returns:
        CollocationOperators with read-only arrays
    """
    if tau_extra is None:
        tau_extra = default_tau_extra(rule)

    A = build_A(rule)
    A_tilde = A[1:].copy()
    alpha = build_alpha(rule, A_tilde)
    E = build_E(A_tilde)
    A_dag = build_A_dag(rule, A)
    D_dag = build_D_dag(rule, E, alpha)
    D_ddag = build_D_ddag(A_dag)
    B = build_B(rule, A, tau_extra)
    D_ext = build_D_extended(rule, tau_extra)

    arrays = dict(A=A, A_tilde=A_tilde, E=E, alpha=alpha, A_dag=A_dag,
                  D_dag=D_dag, D_ddag=D_ddag, B=B, D_ext=D_ext)
    for value in arrays.values():
        value.setflags(write=False)
    return CollocationOperators(rule=rule, tau_extra=float(tau_extra), **arrays)


@lru_cache(maxsize=None)
def collocation_operators(n_points: int, tau_extra: Optional[float] = None) -> CollocationOperators:
    """Cached operator family for an N-point rule."""
    return build_operators(lgl_rule(n_points), tau_extra)


def _relative(residual: np.ndarray, reference: np.ndarray) -> float:
    return float(np.max(np.abs(residual)) / max(1.0, np.max(np.abs(reference))))


def _legendre_samples(nodes: np.ndarray, max_degree: int):
    """(values, derivatives, integrals from -1) of P_0..P_max_degree at nodes."""
    for degree in range(max_degree + 1):
        poly = Legendre.basis(degree)
        yield poly(nodes), poly.deriv()(nodes), poly.integ(lbnd=-1)(nodes)


def verify_identities(ops: CollocationOperators) -> Dict[str, float]:
    """
    Max-norm residuals of the operator identities.

    Exactness checks use the Legendre polynomials of admissible degree and
    are scaled by max(1, |reference|).

    Args:
        ops: Operator family to check

    Returns:
        Mapping from identity name to residual
    """
    rule = ops.rule
    n, tau, w = rule.n, rule.nodes, rule.weights
    ones = np.ones(n)
    report: Dict[str, float] = {}

    report['A_first_row_zero'] = float(np.max(np.abs(ops.A[0])))
    report['A_last_row_weights'] = float(np.max(np.abs(ops.A[-1] - w)))
    report['A_row_sums'] = float(np.max(np.abs(ops.A.sum(axis=1) - (tau + 1.0))))
    report['E_annihilates_ones'] = float(np.max(np.abs(ops.E @ ones)))
    report['E_inverts_A_block'] = float(np.max(np.abs(ops.E[:, 1:] @ ops.A[1:, 1:] - np.eye(n - 1))))

    solved = lu_solve(_block_factor(ops.A_tilde), ops.A_tilde[:, 0])
    report['alpha_closed_form'] = float(np.max(np.abs(solved - ops.alpha)))

    report['A_dag_first_row_D_dag'] = float(np.max(np.abs(ops.A_dag[0] @ ops.D_dag)))
    reconstruction = (np.outer(np.ones(n - 1), ops.alpha * w[1:]) / w[0]
                      + ops.A_dag[1:] @ ops.D_dag)
    report['identity_reconstruction'] = float(np.max(np.abs(reconstruction - np.eye(n - 1))))

    exact_A, exact_D_dag, exact_D_ddag, exact_A_dag = 0.0, 0.0, 0.0, 0.0
    for degree, (values, derivs, integrals) in enumerate(_legendre_samples(tau, n - 1)):
        exact_A = max(exact_A, _relative(ops.A @ values - integrals, integrals))
        if degree <= n - 2:
            exact_D_dag = max(exact_D_dag, _relative(ops.D_dag @ values[1:] - derivs, derivs))
            exact_D_ddag = max(exact_D_ddag, _relative(ops.D_ddag @ values - derivs, derivs))
        if degree <= n - 3:
            exact_A_dag = max(exact_A_dag,
                              _relative(values - values[0] - ops.A_dag @ derivs, values))
    report['A_exactness'] = exact_A
    report['D_dag_exactness'] = exact_D_dag
    report['D_ddag_exactness'] = exact_D_ddag
    report['A_dag_integration'] = exact_A_dag

    report['B_inverts_derivative_form'] = float(np.max(np.abs(ops.B @ ops.D_ext[:, 1:] - np.eye(n))))
    report['derivative_form_annihilates_ones'] = float(np.max(np.abs(ops.D_ext @ np.ones(n + 1))))
    return report
