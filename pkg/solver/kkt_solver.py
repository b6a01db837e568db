"""Newton's method on the KKT system of an equality-constrained NLP."""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg, sparse

from utils.config import (
    ARMIJO_FACTOR, BACKTRACK_FACTOR, CONSTRAINT_REG, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE,
    MAX_TOLERANCE, MIN_STEP, MIN_TOLERANCE, MULTIPLIER_RCOND, REG_FACTOR, REG_MAX, REG_START,
    RETRY_REG_FACTOR,
)
from utils.logger import RunLogger, get_logger

STATUS_CONVERGED = 'converged'
STATUS_MAX_ITERATIONS = 'max_iterations'
STATUS_LINE_SEARCH_FAILURE = 'line_search_failure'
STATUS_SINGULAR_SYSTEM = 'singular_system'

_ZERO_PIVOT = 1e3 * np.finfo(float).eps


@dataclass
class NlpSolution:
    """Primal-dual result of a solve; the best iterate when not converged."""

    primal: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    stationarity: float
    feasibility: float
    iterations: int
    status: str
    objective: float
    history: List[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


def _dense(matrix) -> np.ndarray:
    if sparse.issparse(matrix):
        return matrix.toarray()
    return np.asarray(matrix, dtype=float)


def kkt_residual(problem, primal: np.ndarray, multipliers: np.ndarray) -> Tuple[float, float]:
    """
    Infinity norms of the Lagrangian gradient and of the constraints.

    The Lagrangian is objective + multipliers . constraints.

    Returns:
        (stationarity, feasibility)
    """
    primal = np.asarray(primal, dtype=float)
    multipliers = np.asarray(multipliers, dtype=float)
    if primal.shape != (problem.n_vars,) or multipliers.shape != (problem.n_cons,):
        raise ValueError(
            f"Expected {problem.n_vars} primal and {problem.n_cons} multiplier values, "
            f"got {primal.shape} and {multipliers.shape}"
        )
    grad = problem.objective_gradient(primal) + _dense(problem.jacobian(primal)).T @ multipliers
    cons = problem.constraints(primal)
    return float(np.max(np.abs(grad), initial=0.0)), float(np.max(np.abs(cons), initial=0.0))


def inertia(d: np.ndarray, scale: float) -> Tuple[int, int, int]:
    """
    (positive, negative, zero) eigenvalue counts of an LDL^T block-diagonal factor.

    2x2 blocks are identified by their nonzero subdiagonal entry.
    """
    n = d.shape[0]
    threshold = _ZERO_PIVOT * max(scale, 1.0)
    counts = [0, 0, 0]
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            values = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            i += 2
        else:
            values = [d[i, i]]
            i += 1
        for value in values:
            if abs(value) <= threshold:
                counts[2] += 1
            elif value > 0:
                counts[0] += 1
            else:
                counts[1] += 1
    return counts[0], counts[1], counts[2]


def ldl_solve(lu: np.ndarray, d: np.ndarray, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve with factors from scipy.linalg.ldl, reusing the factorization."""
    L = lu[perm]
    y = linalg.solve_triangular(L, rhs[perm], lower=True, unit_diagonal=True)
    bands = np.zeros((3, d.shape[0]))
    bands[0, 1:] = np.diag(d, 1)
    bands[1] = np.diag(d)
    bands[2, :-1] = np.diag(d, -1)
    w = linalg.solve_banded((1, 1), bands, y)
    x_perm = linalg.solve_triangular(L.T, w, lower=False, unit_diagonal=True)
    x = np.empty_like(x_perm)
    x[perm] = x_perm
    return x


class KktSolver:
    """Newton-KKT solver with inertia correction and a residual-norm line search."""

    def __init__(self, tol: float = DEFAULT_TOLERANCE, max_iter: int = DEFAULT_MAX_ITER,
                 logger: Optional[RunLogger] = None):
        """
        Initialize the solver.

        Args:
            tol: Convergence tolerance on both KKT residual norms
            max_iter: Iteration cap
            logger: Optional logger (per-iteration residuals at debug level)
        """
        if not MIN_TOLERANCE <= tol <= MAX_TOLERANCE:
            raise ValueError(f"Tolerance {tol} outside [{MIN_TOLERANCE}, {MAX_TOLERANCE}]")
        if max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {max_iter}")
        self.tol = tol
        self.max_iter = max_iter
        self.logger = logger or get_logger()

    def _evaluate(self, problem, z: np.ndarray):
        g = problem.objective_gradient(z)
        c = problem.constraints(z)
        J = _dense(problem.jacobian(z))
        return g, c, J

    def _initial_multipliers(self, g: np.ndarray, J: np.ndarray) -> np.ndarray:
        if J.shape[0] == 0:
            return np.zeros(0)
        # minimum-norm solution; near-dependent constraint rows get no weight
        lam, *_ = linalg.lstsq(J.T, -g, cond=MULTIPLIER_RCOND)
        return lam

    def _factor_solve(self, K0: np.ndarray, rhs: np.ndarray, n: int, m: int,
                      delta_w: float, delta_c: float, scale: float):
        """Factor K0 + diag(delta_w I, -delta_c I); returns (step or None, inertia)."""
        K = K0.copy()
        K[np.arange(n), np.arange(n)] += delta_w
        K[n + np.arange(m), n + np.arange(m)] -= delta_c
        lu, d, perm = linalg.ldl(K, lower=True)
        counts = inertia(d, scale)
        if counts[2] > 0:
            return None, counts
        step = ldl_solve(lu, d, perm, rhs)
        return (step if np.all(np.isfinite(step)) else None), counts

    def _candidate_steps(self, K0: np.ndarray, rhs: np.ndarray, n: int, m: int):
        """
        Yield (step, delta_w, delta_c) in the order the line search tries them.

        The least-shifted step whose matrix has inertia (n, m, 0) comes first,
        then more strongly shifted ones. Zero pivots switch on the constraint
        shift. When no Hessian shift up to REG_MAX reaches that inertia, the
        least-shifted nonsingular step is the only candidate.
        """
        scale = float(np.max(np.abs(K0), initial=0.0))
        delta_w, delta_c = 0.0, 0.0
        fallback = None
        found = False
        while delta_w <= REG_MAX:
            step, counts = self._factor_solve(K0, rhs, n, m, delta_w, delta_c, scale)
            if counts[2] > 0 and delta_c == 0.0:
                delta_c = CONSTRAINT_REG
                continue
            if step is not None and counts[:2] == (n, m):
                found = True
                yield step, delta_w, delta_c
            elif step is not None and fallback is None:
                fallback = (step, delta_w, delta_c)
            if found:
                delta_w = max(delta_w, REG_START) * RETRY_REG_FACTOR
            else:
                delta_w = REG_START if delta_w == 0.0 else delta_w * REG_FACTOR
        if not found and fallback is not None:
            yield fallback

    def _line_search(self, problem, z: np.ndarray, lam: np.ndarray, step: np.ndarray,
                     phi0: float, slope: float):
        """Armijo backtracking on the squared KKT residual; None when the step underflows."""
        n = z.size
        alpha = 1.0
        while alpha >= MIN_STEP:
            z_trial = z + alpha * step[:n]
            lam_trial = lam + alpha * step[n:]
            with np.errstate(all='ignore'):
                try:
                    g_t, c_t, J_t = self._evaluate(problem, z_trial)
                    r_t = np.concatenate([g_t + J_t.T @ lam_trial, c_t])
                    phi = float(r_t @ r_t)
                except (ValueError, FloatingPointError, ZeroDivisionError):
                    phi = np.inf
            if np.isfinite(phi) and phi <= phi0 + ARMIJO_FACTOR * alpha * slope:
                return z_trial, lam_trial, g_t, c_t, J_t
            alpha *= BACKTRACK_FACTOR
        return None

    def solve(self, problem, guess: np.ndarray) -> NlpSolution:
        """
        Solve the NLP from a primal guess; multipliers start at least-squares estimates.

        Args:
            problem: Object exposing n_vars, n_cons, objective, objective_gradient,
                constraints, jacobian and lagrangian_hessian
            guess: Primal starting point

        Returns:
            NlpSolution (never raises on numerical failure)
        """
        z = np.array(guess, dtype=float)
        if z.shape != (problem.n_vars,):
            raise ValueError(f"Guess has shape {z.shape}, expected ({problem.n_vars},)")
        n, m = problem.n_vars, problem.n_cons

        g, c, J = self._evaluate(problem, z)
        lam = self._initial_multipliers(g, J)

        history: List[float] = []
        best = None
        status = STATUS_MAX_ITERATIONS
        iteration = 0

        while True:
            r_stat = g + J.T @ lam
            stat = float(np.max(np.abs(r_stat), initial=0.0))
            feas = float(np.max(np.abs(c), initial=0.0))
            res = max(stat, feas)
            history.append(res)
            if best is None or res < best[0]:
                best = (res, stat, feas, z.copy(), lam.copy())

            if len(history) > 1 and history[-2] > 0.0:
                ratio = res / history[-2] ** 2
                self.logger.debug(
                    f"iter {iteration}: stationarity={stat:.3e} feasibility={feas:.3e} ratio={ratio:.3e}"
                )
            else:
                self.logger.debug(f"iter {iteration}: stationarity={stat:.3e} feasibility={feas:.3e}")

            if res <= self.tol:
                status = STATUS_CONVERGED
                break
            if iteration >= self.max_iter:
                status = STATUS_MAX_ITERATIONS
                break

            H = problem.lagrangian_hessian(z, lam)
            K0 = np.zeros((n + m, n + m))
            K0[:n, :n] = H
            K0[:n, n:] = J.T
            K0[n:, :n] = J
            r = np.concatenate([r_stat, c])
            phi0 = float(r @ r)

            trial = None
            factored = False
            for step, delta_w, delta_c in self._candidate_steps(K0, -r, n, m):
                factored = True
                slope = 2.0 * float(r @ (K0 @ step))
                if slope >= 0.0:
                    continue
                trial = self._line_search(problem, z, lam, step, phi0, slope)
                if trial is not None:
                    if delta_w > 0.0 or delta_c > 0.0:
                        self.logger.debug(f"iter {iteration}: shifts delta_w={delta_w:.1e} delta_c={delta_c:.1e}")
                    break

            if trial is None:
                status = STATUS_LINE_SEARCH_FAILURE if factored else STATUS_SINGULAR_SYSTEM
                self.logger.warning(f"Newton iteration {iteration} stopped: {status} (residual {res:.3e})")
                break

            z, lam, g, c, J = trial
            iteration += 1

        res, stat, feas, z_best, lam_best = best
        if status == STATUS_CONVERGED:
            z_best, lam_best, stat, feas, res = z, lam, stat, feas, max(stat, feas)
        solution = NlpSolution(
            primal=z_best,
            multipliers=lam_best,
            kkt_residual=res,
            stationarity=stat,
            feasibility=feas,
            iterations=iteration,
            status=status,
            objective=float(problem.objective(z_best)),
            history=history,
        )
        self.logger.info(
            f"Solve finished: {status} after {iteration} iterations, KKT residual {res:.3e}"
        )
        return solution


def solve(problem, guess: np.ndarray, tol: float = DEFAULT_TOLERANCE,
          max_iter: int = DEFAULT_MAX_ITER, logger: Optional[RunLogger] = None) -> NlpSolution:
    """Solve an equality-constrained NLP with a KktSolver."""
    return KktSolver(tol=tol, max_iter=max_iter, logger=logger).solve(problem, guess)
