"""Legendre polynomials, LGL nodes and weights, and Lagrange interpolation."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from collocation.errors import OperatorConstructionError
from utils.config import NODE_MAX_ITER, NODE_TOLERANCE

ArrayLike = Union[float, np.ndarray]

_DOMAIN_SLACK = 1e-12


def _check_domain(t: np.ndarray):
    if np.any(np.abs(t) > 1.0 + _DOMAIN_SLACK):
        raise ValueError(f"Evaluation point outside [-1, 1]: max |t| = {np.max(np.abs(t))}")


def _legendre_recurrence(n: int, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p_prev, p = np.ones_like(t), t.copy()
    dp_prev, dp = np.zeros_like(t), np.ones_like(t)
    if n == 0:
        return p_prev, dp_prev
    for k in range(1, n):
        p_next = ((2 * k + 1) * t * p - k * p_prev) / (k + 1)
        # P'_{k+1} = P'_{k-1} + (2k+1) P_k holds at the endpoints too
        dp_next = dp_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


def legendre_eval(n: int, t: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """
    Evaluate the Legendre polynomial P_n and its derivative.

    Args:
        n: Polynomial degree (n >= 0)
        t: Evaluation point(s) in [-1, 1]

    Returns:
        Tuple (P_n(t), P_n'(t)); scalars for scalar input

    Raises:
        ValueError: If n is negative or t lies outside [-1, 1]
    """
    if n < 0:
        raise ValueError(f"Legendre degree must be non-negative, got {n}")
    t_arr = np.asarray(t, dtype=float)
    _check_domain(t_arr)
    value, derivative = _legendre_recurrence(n, np.atleast_1d(t_arr))
    if t_arr.ndim == 0:
        return float(value[0]), float(derivative[0])
    return value.reshape(t_arr.shape), derivative.reshape(t_arr.shape)


def lobatto_poly_eval(n_points: int, t: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """
    Evaluate the Lobatto polynomial (t^2 - 1) P'_{N-1}(t) and its derivative.

    The derivative is N(N-1) P_{N-1}(t), which follows from Legendre's equation.

    Args:
        n_points: Number of LGL points N (>= 2)
        t: Evaluation point(s) in [-1, 1]

    Returns:
        Tuple (value, derivative); scalars for scalar input
    """
    if n_points < 2:
        raise ValueError(f"Lobatto polynomial needs N >= 2, got {n_points}")
    p, dp = legendre_eval(n_points - 1, t)
    t_arr = np.asarray(t, dtype=float)
    value = (t_arr * t_arr - 1.0) * dp
    derivative = n_points * (n_points - 1) * np.asarray(p)
    if t_arr.ndim == 0:
        return float(value), float(derivative)
    return value, derivative


def barycentric_weights(points: np.ndarray) -> np.ndarray:
    """
    Barycentric weights 1 / prod_{k != j}(x_j - x_k), normalised to max |v| = 1.

    Args:
        points: Distinct interpolation points

    Returns:
        Array of weights, one per point
    """
    points = np.asarray(points, dtype=float)
    diffs = np.subtract.outer(points, points)
    np.fill_diagonal(diffs, 1.0)
    weights = 1.0 / np.prod(diffs, axis=1)
    return weights / np.max(np.abs(weights))


def differentiation_matrix(points: np.ndarray) -> np.ndarray:
    """
    Differentiation matrix for the interpolant through the given points.

    Row i maps point values to the interpolant's derivative at points[i].
    The diagonal uses the negative-sum form, so every row sums to zero.

    Args:
        points: Distinct interpolation points

    Returns:
        Square matrix of size len(points)
    """
    points = np.asarray(points, dtype=float)
    v = barycentric_weights(points)
    diffs = np.subtract.outer(points, points)
    np.fill_diagonal(diffs, 1.0)
    # D_ij = (v_j / v_i) / (x_i - x_j)
    D = (v[None, :] / v[:, None]) / diffs
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -np.sum(D, axis=1))
    return D


@dataclass(frozen=True)
class QuadratureRule:
    """LGL nodes and weights on [-1, 1]; arrays are read-only."""

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    barycentric_weights: np.ndarray


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _interior_nodes(n_points: int) -> np.ndarray:
    degree = n_points - 1
    k = np.arange(1, n_points - 1)
    x = -np.cos(np.pi * k / degree)

    for _ in range(NODE_MAX_ITER):
        p, dp = _legendre_recurrence(degree, x)
        # P'' from Legendre's equation; interior points only, so 1 - x^2 > 0
        d2p = (2.0 * x * dp - degree * (degree + 1) * p) / (1.0 - x * x)
        step = dp / d2p
        x = x - step
        if np.max(np.abs(step)) <= NODE_TOLERANCE:
            break
    else:
        raise OperatorConstructionError(
            f"LGL node iteration did not converge for N={n_points} "
            f"(last step {np.max(np.abs(step)):.3e})"
        )

    x = np.sort(x)
    return 0.5 * (x - x[::-1])


@lru_cache(maxsize=None)
def lgl_rule(n_points: int) -> QuadratureRule:
    """
    Build the N-point Legendre-Gauss-Lobatto rule.

    Interior nodes are roots of P'_{N-1}, found by Newton iteration from
    Chebyshev-Lobatto guesses and symmetrised. Endpoints are exactly -1 and +1.

    Args:
        n_points: Number of nodes N (>= 2)

    Returns:
        QuadratureRule with nodes, weights, and barycentric weights

    Raises:
        ValueError: If N < 2
        OperatorConstructionError: If the node iteration does not converge
    """
    if n_points < 2:
        raise ValueError(f"LGL rule needs at least 2 points, got {n_points}")

    nodes = np.empty(n_points)
    nodes[0], nodes[-1] = -1.0, 1.0
    if n_points > 2:
        nodes[1:-1] = _interior_nodes(n_points)

    p, _ = _legendre_recurrence(n_points - 1, nodes)
    weights = 2.0 / (n_points * (n_points - 1) * p * p)
    weights = 0.5 * (weights + weights[::-1])

    return QuadratureRule(
        n=n_points,
        nodes=_frozen(nodes),
        weights=_frozen(weights),
        barycentric_weights=_frozen(barycentric_weights(nodes)),
    )


def _validate_support(nodes: np.ndarray):
    if nodes.ndim != 1 or nodes.size < 1:
        raise ValueError("Interpolation nodes must be a non-empty 1-D array")
    gaps = np.diff(nodes)
    if np.any(gaps == 0.0):
        raise ValueError("Interpolation nodes contain duplicates")
    if np.any(gaps < 0.0):
        raise ValueError("Interpolation nodes must be strictly increasing")


def _basis_matrix(nodes: np.ndarray, weights: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Rows: sample points; columns: Lagrange basis functions."""
    diffs = np.subtract.outer(t, nodes)
    hits = diffs == 0.0
    diffs[hits] = 1.0
    terms = weights[None, :] / diffs
    basis = terms / np.sum(terms, axis=1, keepdims=True)
    hit_rows = np.any(hits, axis=1)
    basis[hit_rows] = hits[hit_rows].astype(float)
    return basis


def lagrange_eval(rule: QuadratureRule, j: int, t: ArrayLike) -> ArrayLike:
    """
    Evaluate the j-th Lagrange basis polynomial (1-based) of the rule.

    Args:
        rule: Quadrature rule supplying the support points
        j: Basis index in 1..N
        t: Evaluation point(s)

    Returns:
        L_j(t); exactly 1 or 0 at the nodes
    """
    if not 1 <= j <= rule.n:
        raise ValueError(f"Basis index {j} out of range 1..{rule.n}")
    t_arr = np.asarray(t, dtype=float)
    basis = _basis_matrix(rule.nodes, rule.barycentric_weights, np.atleast_1d(t_arr).ravel())
    column = basis[:, j - 1]
    if t_arr.ndim == 0:
        return float(column[0])
    return column.reshape(t_arr.shape)


def interpolation_matrix(nodes: np.ndarray, t: ArrayLike) -> np.ndarray:
    """
    Matrix mapping node values to interpolant values at t.

    Args:
        nodes: Strictly increasing support points
        t: Sample points

    Returns:
        Array of shape (len(t), len(nodes))
    """
    nodes = np.asarray(nodes, dtype=float)
    _validate_support(nodes)
    return _basis_matrix(nodes, barycentric_weights(nodes), np.atleast_1d(np.asarray(t, dtype=float)).ravel())


def interpolate(rule_nodes: np.ndarray, values: np.ndarray, t: ArrayLike) -> np.ndarray:
    """
    Evaluate the barycentric Lagrange interpolant of node values.

    Args:
        rule_nodes: Strictly increasing support points
        values: Array with one row per node
        t: Scalar or array of evaluation points

    Returns:
        Interpolated row for scalar t, or one row per entry of t

    Raises:
        ValueError: If nodes are not strictly increasing or row counts differ
    """
    nodes = np.asarray(rule_nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[0] != nodes.shape[0]:
        raise ValueError(
            f"Value rows ({values.shape[0]}) must match node count ({nodes.shape[0]})"
        )
    result = np.tensordot(interpolation_matrix(nodes, t), values, axes=(1, 0))
    if np.ndim(t) == 0:
        return result[0]
    return result
