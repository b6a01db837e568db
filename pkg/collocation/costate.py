"""Costate estimates from NLP multipliers, adjoint diagnostics, and mesh-point costates."""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.interpolate import interp1d
from scipy.signal import lfilter

from collocation.classic_lgl import classic_costate
from collocation.errors import CostateSystemError
from collocation.lgl_basis import QuadratureRule
from collocation.matrices import CollocationOperators
from collocation.transcription import (
    FORM_CLASSIC, FORM_DERIVATIVE_LIKE, FORM_INTEGRAL, FORM_SECOND_INTEGRAL, NlpProblem,
)

FILTER_TAPS = np.array([0.25, 0.5, 0.25])
FILTER_CUT = 2
MIN_FILTER_POINTS = 8


@dataclass
class CostateEstimate:
    """
    Costate at the LGL points of each interval plus boundary diagnostics.

    mesh_costate and q are filled by superconvergent_costate.
    """

    Lambda: List[np.ndarray]
    mu: np.ndarray
    nu: np.ndarray
    terminal_target: np.ndarray
    initial_gap: np.ndarray
    terminal_gap: np.ndarray
    mesh_costate: Optional[np.ndarray] = None
    q: Optional[List[np.ndarray]] = None


@dataclass
class AdjointResidual:
    """Residuals of the transformed adjoint system in integral and derivative form."""

    integral: np.ndarray
    derivative: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.integral)), np.max(np.abs(self.derivative))))


def costate_from_integral(M: np.ndarray, rule: QuadratureRule, A_tilde: np.ndarray) -> np.ndarray:
    """Lambda = W^-1 A_tilde^T M for integral-form multipliers M of shape (N-1, n_x)."""
    M = np.asarray(M, dtype=float)
    return (A_tilde.T @ M) / rule.weights.reshape((-1,) + (1,) * (M.ndim - 1))


def costate_from_derivative_like(S: np.ndarray, rule: QuadratureRule, alpha: np.ndarray) -> np.ndarray:
    """Lambda_1 = alpha^T S / w_1 and Lambda_{2:N} = W_{2:N}^-1 S."""
    S = np.asarray(S, dtype=float)
    w = rule.weights
    first = np.asarray((alpha @ S) / w[0])
    rest = S / w[1:].reshape((-1,) + (1,) * (S.ndim - 1))
    return np.concatenate([first[None], rest])


def multiplier_transform(M: np.ndarray, A_tilde: np.ndarray) -> np.ndarray:
    """Derivative-like multipliers S = A_tilde[:, 2:N]^T M."""
    return A_tilde[:, 1:].T @ np.asarray(M, dtype=float)


def unscaled_multipliers(problem: NlpProblem, multipliers: np.ndarray) -> List[np.ndarray]:
    """Per-interval defect multipliers rescaled by 2 / Delta_k."""
    return [
        (2.0 / iv.delta) * block
        for iv, block in zip(problem.intervals, problem.defect_multipliers(multipliers))
    ]


def endpoint_multipliers(problem: NlpProblem, primal: np.ndarray,
                         multipliers: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (mu, nu, terminal_target) from the boundary-row multipliers nu.

    mu = -(db/dx0)^T nu, terminal_target = gradient in xf of (Phi + nu^T b).
    """
    ocp = problem.ocp
    x0, xf = problem.endpoints(np.asarray(primal, dtype=float))
    nu = problem.boundary_multipliers(multipliers)
    _, gf = ocp.eval_mayer_gradient(x0, xf)
    if ocp.n_b > 0:
        J0, Jf = ocp.eval_boundary_jacobian(x0, xf)
        return -J0.T @ nu, nu, gf + Jf.T @ nu
    return np.zeros(ocp.n_x), nu, gf


def estimate_costate(problem: NlpProblem, primal: np.ndarray, multipliers: np.ndarray) -> CostateEstimate:
    """
    Costate at the LGL points from a solved transcription.

    Integral and second-integral forms use the integral-form map; the
    extra-point row's multiplier vanishes at a KKT point since X_{N+1}
    appears in no other term. Derivative-like solutions use the
    derivative-like map; classic solutions use M_i / w_i.
    """
    blocks = unscaled_multipliers(problem, multipliers)
    Lambda = []
    for iv, M in zip(problem.intervals, blocks):
        if problem.form == FORM_INTEGRAL:
            Lambda.append(costate_from_integral(M, iv.rule, iv.ops.A_tilde))
        elif problem.form == FORM_SECOND_INTEGRAL:
            Lambda.append(costate_from_integral(M[:-1], iv.rule, iv.ops.A_tilde))
        elif problem.form == FORM_DERIVATIVE_LIKE:
            Lambda.append(costate_from_derivative_like(M, iv.rule, iv.ops.alpha))
        elif problem.form == FORM_CLASSIC:
            Lambda.append(classic_costate(M, iv.rule))

    mu, nu, target = endpoint_multipliers(problem, primal, multipliers)
    return CostateEstimate(
        Lambda=Lambda,
        mu=mu,
        nu=nu,
        terminal_target=target,
        initial_gap=mu - Lambda[0][0],
        terminal_gap=Lambda[-1][-1] - target,
    )


def adjoint_residual(Lambda: np.ndarray, mu: np.ndarray, problem: NlpProblem,
                     primal: np.ndarray, terminal_target: np.ndarray) -> AdjointResidual:
    """
    Residuals of the transformed adjoint system of a single-interval solution.

    With G = -grad_X <Lambda, F> + e_1 (mu - Lambda_1) / w_1 + e_N (Lambda_N - target) / w_N:
    derivative form  D_dag Lambda_{2:N} - G,
    integral form    Lambda - 1 Lambda_1 - A_dag G.

    Raises:
        ValueError: For multi-interval problems
    """
    if len(problem.intervals) != 1:
        raise ValueError("Adjoint residuals are defined for single-interval solutions only")
    iv = problem.intervals[0]
    ops: CollocationOperators = iv.ops
    w = iv.rule.weights
    Lambda = np.asarray(Lambda, dtype=float)

    traj = problem.trajectory(primal)
    fx = problem.ocp.eval_jac_x(traj.times[0], traj.states[0], traj.controls[0])
    grad_F = 0.5 * iv.delta * np.einsum('jml,jm->jl', fx, Lambda)

    G = -grad_F
    G[0] += (mu - Lambda[0]) / w[0]
    G[-1] += (Lambda[-1] - terminal_target) / w[-1]

    derivative = ops.D_dag @ Lambda[1:] - G
    integral = Lambda - Lambda[0][None, :] - ops.A_dag @ G
    return AdjointResidual(integral=integral, derivative=derivative)


def control_stationarity(Lambda: np.ndarray, problem: NlpProblem, primal: np.ndarray,
                         interval: int = 0) -> np.ndarray:
    """grad_U <Lambda, F> at each node of an interval, shape (N, n_u)."""
    iv = problem.intervals[interval]
    traj = problem.trajectory(primal)
    fu = problem.ocp.eval_jac_u(traj.times[interval], traj.states[interval], traj.controls[interval])
    return 0.5 * iv.delta * np.einsum('jml,jm->jl', fu, np.asarray(Lambda, dtype=float))


def hamiltonian(Lambda: np.ndarray, problem: NlpProblem, primal: np.ndarray,
                interval: int = 0) -> np.ndarray:
    """H = Lambda^T f at each node of an interval."""
    traj = problem.trajectory(primal)
    return np.einsum('jm,jm->j', np.asarray(Lambda, dtype=float), traj.dynamics[interval])


def superconvergent_costate(problem: NlpProblem, primal: np.ndarray,
                            terminal_target: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Mesh-point costate p_k by a backward sweep over the intervals.

    In each interval the linear system
        q_i - (Delta/2) sum_j (w_j A_ji / w_i) f_x(j)^T q_j = p_{k+1}
    is solved, then p_k = p_{k+1} + (Delta/2) sum_j w_j f_x(j)^T q_j.

    Args:
        problem: Solved transcription
        primal: Primal solution
        terminal_target: p_K, the gradient in xf of Phi + nu^T b

    Returns:
        (p of shape (K+1, n_x), list of q arrays of shape (N_k, n_x))

    Raises:
        CostateSystemError: If an interval's q-system is singular
    """
    traj = problem.trajectory(primal)
    n_x = problem.ocp.n_x
    K = len(problem.intervals)
    p = np.zeros((K + 1, n_x))
    p[K] = terminal_target
    qs: List[Optional[np.ndarray]] = [None] * K

    for k in range(K - 1, -1, -1):
        iv = problem.intervals[k]
        n, w, A = iv.rule.n, iv.rule.weights, iv.ops.A
        fx = problem.ocp.eval_jac_x(traj.times[k], traj.states[k], traj.controls[k])
        coef = (A.T * w[None, :]) / w[:, None]
        system = np.eye(n * n_x) - 0.5 * iv.delta * np.einsum('ij,jba->iajb', coef, fx).reshape(n * n_x, n * n_x)
        rhs = np.tile(p[k + 1], n)
        try:
            q = linalg.solve(system, rhs).reshape(n, n_x)
        except linalg.LinAlgError as e:
            raise CostateSystemError(f"Singular costate system: {e}", interval=k)
        if not np.all(np.isfinite(q)):
            raise CostateSystemError("Costate system produced non-finite values", interval=k)
        qs[k] = q
        p[k] = p[k + 1] + 0.5 * iv.delta * np.einsum('j,jml,jm->l', w, fx, q)
    return p, qs


def filter_costate(lgl_points: np.ndarray, costate_in: np.ndarray) -> np.ndarray:
    """
    Smooth an oscillating costate with a 3-tap causal FIR filter.

    Two samples are cut at each end, the filter [0.25, 0.5, 0.25] runs with
    zero initial state, its first two outputs are dropped, and the three
    leading and trailing nodes are filled by linear extrapolation of the
    retained samples.

    Args:
        lgl_points: Node positions (N,) or (N, 1)
        costate_in: Costate at the nodes (N, n_x) or (N,)

    Returns:
        Filtered costate with the input's shape

    Raises:
        ValueError: If fewer than 8 nodes are given
    """
    points = np.asarray(lgl_points, dtype=float).reshape(-1)
    values = np.asarray(costate_in, dtype=float)
    n = points.size
    if n < MIN_FILTER_POINTS:
        raise ValueError(f"Costate filter needs at least {MIN_FILTER_POINTS} nodes, got {n}")
    if values.shape[0] != n:
        raise ValueError(f"Costate rows ({values.shape[0]}) must match node count ({n})")

    section = values[FILTER_CUT:n - FILTER_CUT]
    filtered = lfilter(FILTER_TAPS, [1.0], section, axis=0)
    YY = filtered[2:]
    XX = points[FILTER_CUT + 1:n - (FILTER_CUT + 1)]
    extrapolate = interp1d(XX, YY, axis=0, kind='linear', fill_value='extrapolate')
    head = extrapolate(points[:FILTER_CUT + 1])
    tail = extrapolate(points[n - (FILTER_CUT + 1):])
    return np.concatenate([head, YY, tail], axis=0)
