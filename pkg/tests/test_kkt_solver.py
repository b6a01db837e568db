"""Tests for the Newton-KKT solver on small problems with known solutions."""

import numpy as np
import pytest
from scipy import linalg

from solver.kkt_solver import (
    STATUS_CONVERGED, STATUS_MAX_ITERATIONS, STATUS_SINGULAR_SYSTEM, KktSolver, inertia,
    kkt_residual, ldl_solve, solve,
)
from utils.logger import RunLogger


class QuadraticProblem:
    """min 1/2 z'Qz + q'z  subject to  Cz = d."""

    def __init__(self, Q, q, C, d):
        self.Q = np.asarray(Q, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.n_vars = self.Q.shape[0]
        self.n_cons = self.C.shape[0]

    def objective(self, z):
        return float(0.5 * z @ self.Q @ z + self.q @ z)

    def objective_gradient(self, z):
        return self.Q @ z + self.q

    def constraints(self, z):
        return self.C @ z - self.d

    def jacobian(self, z):
        return self.C

    def lagrangian_hessian(self, z, multipliers):
        return self.Q


class CircleProblem:
    """min z1 + z2  subject to  z1^2 + z2^2 = 2; optimum (-1, -1) with multiplier 1/2."""

    n_vars = 2
    n_cons = 1

    def objective(self, z):
        return float(z[0] + z[1])

    def objective_gradient(self, z):
        return np.ones(2)

    def constraints(self, z):
        return np.array([z @ z - 2.0])

    def jacobian(self, z):
        return 2.0 * z[None, :]

    def lagrangian_hessian(self, z, multipliers):
        return 2.0 * multipliers[0] * np.eye(2)


@pytest.fixture
def quiet_logger():
    return RunLogger()


def test_quadratic_solved_in_one_step(quiet_logger):
    """Newton is exact on an equality-constrained QP."""
    problem = QuadraticProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0])
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(problem, np.array([5.0, -3.0]))
    assert result.status == STATUS_CONVERGED
    assert result.converged
    assert result.iterations <= 1
    assert np.allclose(result.primal, [1.0, 1.0], atol=1e-12)
    # Lagrangian is objective + multipliers . constraints
    assert np.allclose(result.multipliers, [-1.0], atol=1e-12)
    assert result.objective == pytest.approx(1.0)


def test_indefinite_hessian_on_null_space(quiet_logger):
    """Q is indefinite but positive on the constraint null space."""
    Q = np.diag([1.0, -1.0, 2.0])
    C = np.array([[0.0, 1.0, 0.0]])
    problem = QuadraticProblem(Q, np.array([1.0, 0.0, -4.0]), C, [3.0])
    result = solve(problem, np.zeros(3), tol=1e-12, logger=quiet_logger)
    assert result.converged
    assert np.allclose(result.primal, [-1.0, 3.0, 2.0], atol=1e-12)
    assert np.allclose(result.multipliers, [3.0], atol=1e-12)


def test_nonlinear_constraint(quiet_logger):
    problem = CircleProblem()
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(problem, np.array([-0.8, -1.3]))
    assert result.converged
    assert np.allclose(result.primal, [-1.0, -1.0], atol=1e-10)
    assert np.allclose(result.multipliers, [0.5], atol=1e-10)
    stat, feas = kkt_residual(problem, result.primal, result.multipliers)
    assert max(stat, feas) <= 1e-12
    assert result.history[-1] <= 1e-12


def test_iteration_cap_returns_best_iterate(quiet_logger):
    problem = CircleProblem()
    result = KktSolver(tol=1e-14, max_iter=1, logger=quiet_logger).solve(problem, np.array([-3.0, -0.2]))
    assert result.status == STATUS_MAX_ITERATIONS
    assert not result.converged
    assert result.kkt_residual == pytest.approx(min(result.history))
    assert result.primal.shape == (2,)


def test_rejects_bad_settings():
    with pytest.raises(ValueError):
        KktSolver(tol=1.0)
    with pytest.raises(ValueError):
        KktSolver(tol=1e-20)
    with pytest.raises(ValueError):
        KktSolver(max_iter=0)


def test_rejects_bad_guess_shape(quiet_logger):
    with pytest.raises(ValueError):
        KktSolver(logger=quiet_logger).solve(CircleProblem(), np.zeros(3))


def test_kkt_residual_values():
    problem = CircleProblem()
    stat, feas = kkt_residual(problem, np.array([1.0, 0.0]), np.array([0.0]))
    assert stat == pytest.approx(1.0)
    assert feas == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kkt_residual(problem, np.zeros(2), np.zeros(2))


def test_inertia_counts():
    assert inertia(np.diag([2.0, -3.0, 0.0]), 3.0) == (1, 1, 1)
    block = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert inertia(block, 1.0) == (1, 1, 0)


def test_ldl_solve_matches_dense_solve():
    rng = np.random.default_rng(4)
    H = rng.standard_normal((5, 5))
    H = H + H.T
    J = rng.standard_normal((2, 5))
    K = np.block([[H, J.T], [J, np.zeros((2, 2))]])
    rhs = rng.standard_normal(7)
    lu, d, perm = linalg.ldl(K, lower=True)
    assert np.allclose(ldl_solve(lu, d, perm, rhs), np.linalg.solve(K, rhs), atol=1e-10)


def test_collocation_solve_converges(ex1_integral_n10):
    solution = ex1_integral_n10.solution
    assert solution.converged
    assert solution.kkt_residual <= ex1_integral_n10.tolerance
    assert solution.iterations <= 15


def test_quadratic_rate_near_solution(quiet_logger):
    """Residuals shrink like r_{k+1} <= C r_k^2 once Newton takes full steps."""
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(CircleProblem(), np.array([-1.2, -0.8]))
    assert result.converged
    history = result.history
    ratios = [history[k + 1] / history[k] ** 2
              for k in range(len(history) - 1) if history[k + 1] >= 1e-12]
    assert ratios
    assert max(ratios) <= 20.0


@pytest.mark.parametrize("Q, q, C, d, primal, multiplier", [
    # min (x - 3)^2 s.t. x - y = 0
    (np.diag([2.0, 0.0]), [-6.0, 0.0], [[1.0, -1.0]], [0.0], [3.0, 3.0], 0.0),
    # min x^2 + y^2 s.t. 1 - x - y = 0
    (2.0 * np.eye(2), [0.0, 0.0], [[-1.0, -1.0]], [-1.0], [0.5, 0.5], 1.0),
])
def test_small_equality_problems(quiet_logger, Q, q, C, d, primal, multiplier):
    problem = QuadraticProblem(Q, q, C, d)
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(problem, np.array([-2.0, 7.0]))
    assert result.converged
    assert np.allclose(result.primal, primal, atol=1e-12)
    assert np.allclose(result.multipliers, [multiplier], atol=1e-12)


def test_duplicated_constraint_rows(quiet_logger):
    """Dependent rows make the KKT matrix singular; the constraint shift still converges."""
    problem = QuadraticProblem(np.eye(2), np.zeros(2), [[1.0, 1.0], [1.0, 1.0]], [2.0, 2.0])
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(problem, np.array([4.0, 0.0]))
    assert result.converged
    assert np.allclose(result.primal, [1.0, 1.0], atol=1e-10)
    # the minimum-norm split is kept by symmetry
    assert np.allclose(result.multipliers, [-0.5, -0.5], atol=1e-8)


def test_negative_curvature_uses_unshifted_step(quiet_logger):
    """No Hessian shift up to the cap fixes the inertia; the plain Newton step finds the saddle."""
    problem = QuadraticProblem(np.diag([1.0, -1.0]), np.zeros(2), [[1.0, 0.0]], [1.0])
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(problem, np.array([0.0, 2.0]))
    assert result.converged
    assert np.allclose(result.primal, [1.0, 0.0], atol=1e-12)
    assert np.allclose(result.multipliers, [-1.0], atol=1e-12)


def test_singular_system_status(quiet_logger):
    """A free variable with zero curvature stays a zero pivot under every allowed shift."""
    problem = QuadraticProblem(np.diag([1e11, 0.0]), np.zeros(2), [[1.0, 0.0]], [1.0])
    result = KktSolver(tol=1e-12, logger=quiet_logger).solve(problem, np.zeros(2))
    assert result.status == STATUS_SINGULAR_SYSTEM
    assert not result.converged
    assert result.iterations == 0
    assert np.allclose(result.primal, 0.0)
