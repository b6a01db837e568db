"""Tests for mesh handling and the integral-form transcriptions."""

import numpy as np
import pytest

from collocation.errors import CallbackShapeError
from collocation.matrices import collocation_operators
from collocation.transcription import (
    FORM_CLASSIC, FORM_DERIVATIVE_LIKE, FORM_INTEGRAL, FORM_SECOND_INTEGRAL, FORMS,
    Mesh, NlpProblem, OcpDefinition, state_extension, transcribe, transcribe_integral,
)
from solver.kkt_solver import KktSolver
from tests.conftest import make_linear_ocp
from utils.logger import RunLogger


def fd_jacobian(problem, z, step=1e-6):
    """Central-difference constraint Jacobian."""
    jac = np.empty((problem.n_cons, problem.n_vars))
    for col in range(problem.n_vars):
        plus, minus = z.copy(), z.copy()
        plus[col] += step
        minus[col] -= step
        jac[:, col] = (problem.constraints(plus) - problem.constraints(minus)) / (2.0 * step)
    return jac


def random_point(problem, seed=3):
    rng = np.random.default_rng(seed)
    return 0.5 + 0.2 * rng.standard_normal(problem.n_vars)


class TestMesh:
    """Mesh validation."""

    def test_uniform(self):
        mesh = Mesh.uniform(4, 3)
        assert mesh.intervals == 4
        assert mesh.boundaries[0] == -1.0
        assert mesh.boundaries[-1] == 1.0
        assert np.allclose(mesh.widths, 0.5)

    def test_single(self):
        mesh = Mesh.single(7)
        assert mesh.boundaries == (-1.0, 1.0)
        assert mesh.points_per_interval == (7,)

    def test_rejects_wrong_span(self):
        with pytest.raises(ValueError):
            Mesh((-1.0, 0.5), (4,))

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            Mesh((-1.0, 0.2, 0.2, 1.0), (3, 3, 3))

    def test_rejects_count_mismatch(self):
        with pytest.raises(ValueError):
            Mesh((-1.0, 0.0, 1.0), (3,))

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            Mesh((-1.0, 1.0), (1,))

    def test_rejects_no_intervals(self):
        with pytest.raises(ValueError):
            Mesh.uniform(0, 4)


class TestOcpDefinition:
    """Problem definition checks."""

    def test_rejects_reversed_times(self):
        with pytest.raises(ValueError):
            OcpDefinition(n_x=1, n_u=1, n_b=0, dynamics=None, mayer_cost=None, boundary=None,
                          t0=1.0, tf=0.0)

    def test_jacobian_check_passes(self, linear_ocp):
        assert linear_ocp.check_jacobians() < 1e-6
        linear_ocp.validate()

    def test_jacobian_check_catches_wrong_jacobian(self):
        ocp = make_linear_ocp()
        ocp.dyn_jac_x = lambda t, x, u: np.full((x.shape[0], 1, 1), 5.0)
        with pytest.raises(ValueError):
            ocp.validate()

    def test_finite_difference_fallback(self):
        ocp = make_linear_ocp(a=-2.0, b=3.0, with_jacobians=False)
        t = np.array([0.1, 0.5])
        x = np.array([[0.3], [0.7]])
        u = np.array([[1.0], [-1.0]])
        assert np.allclose(ocp.eval_jac_x(t, x, u), -2.0, atol=1e-7)
        assert np.allclose(ocp.eval_jac_u(t, x, u), 3.0, atol=1e-7)
        g0, gf = ocp.eval_mayer_gradient(np.array([1.0]), np.array([0.4]))
        assert np.allclose(gf, [0.4], atol=1e-7)


class TestCounts:
    """Variable and constraint counts per form."""

    def test_integral_single_interval(self, ex1):
        problem = transcribe_integral(ex1.ocp, Mesh.single(10))
        assert problem.n_vars == 20
        assert problem.n_defects == 9
        assert problem.n_cons == 10

    def test_derivative_like_matches_integral_counts(self, ex1):
        problem = transcribe(ex1.ocp, Mesh.single(10), FORM_DERIVATIVE_LIKE)
        assert problem.n_vars == 20
        assert problem.n_cons == 10

    def test_second_integral_adds_one_state(self, ex1):
        problem = transcribe(ex1.ocp, Mesh.single(10), FORM_SECOND_INTEGRAL)
        assert problem.n_vars == 21
        assert problem.n_cons == 11
        assert problem.tau_extra is not None

    def test_classic_collocates_every_node(self, ex1):
        problem = transcribe(ex1.ocp, Mesh.single(10), FORM_CLASSIC)
        assert problem.n_vars == 20
        assert problem.n_cons == 11

    def test_multi_interval_shares_mesh_states(self, linear_ocp):
        problem = transcribe_integral(linear_ocp, Mesh.uniform(4, 3))
        # 4 * 2 + 1 state nodes, 12 control nodes
        assert problem.layout.n_state_nodes == 9
        assert problem.n_vars == 21
        assert problem.n_cons == 9

    def test_single_interval_only_forms(self, linear_ocp):
        for form in (FORM_SECOND_INTEGRAL, FORM_CLASSIC):
            with pytest.raises(ValueError):
                NlpProblem(linear_ocp, Mesh.uniform(2, 4), form)

    def test_unknown_form(self, linear_ocp):
        with pytest.raises(ValueError):
            transcribe(linear_ocp, Mesh.single(4), 'chebyshev')


class TestJacobian:
    """Analytic sparse Jacobian against finite differences."""

    @pytest.mark.parametrize("form", FORMS)
    def test_ex1_jacobian(self, ex1, form):
        problem = transcribe(ex1.ocp, Mesh.single(6), form)
        z = random_point(problem)
        assert np.allclose(problem.jacobian(z).toarray(), fd_jacobian(problem, z), atol=1e-6)

    @pytest.mark.parametrize("form", [FORM_INTEGRAL, FORM_DERIVATIVE_LIKE])
    def test_multi_interval_jacobian(self, linear_ocp, form):
        problem = transcribe(linear_ocp, Mesh((-1.0, -0.3, 0.4, 1.0), (3, 5, 4)), form)
        z = random_point(problem, seed=11)
        assert np.allclose(problem.jacobian(z).toarray(), fd_jacobian(problem, z), atol=1e-6)

    @pytest.mark.parametrize("form", FORMS)
    def test_values_inside_pattern(self, ex1, form):
        problem = transcribe(ex1.ocp, Mesh.single(6), form)
        z = random_point(problem)
        dense = problem.jacobian(z).toarray()
        pattern = problem.sparsity_pattern().toarray()
        assert np.all(pattern[dense != 0.0] == 1.0)
        assert problem.jacobian_nnz() == int(pattern.sum())

    def test_derivative_like_dynamics_block_is_sparser(self, ex1):
        n = 10
        integral = transcribe(ex1.ocp, Mesh.single(n), FORM_INTEGRAL)
        derivative = transcribe(ex1.ocp, Mesh.single(n), FORM_DERIVATIVE_LIKE)
        # one state and one control per entry
        assert integral.dynamics_block_nnz() == (n - 1) * n * 2
        assert derivative.dynamics_block_nnz() == 2 * (n - 1) * 2
        assert derivative.dynamics_block_nnz() < integral.dynamics_block_nnz()


class TestEvaluation:
    """Constraint values, guesses and Hessians."""

    def test_integral_defects_vanish_on_exact_polynomial(self):
        """x = t^2 with x' = 2t is integrated exactly by the LGL rows."""
        ocp = OcpDefinition(
            n_x=1, n_u=1, n_b=1,
            dynamics=lambda t, x, u: 2.0 * t[:, None] + 0.0 * u,
            mayer_cost=lambda x0, t0, xf, tf: 0.0,
            boundary=lambda x0, t0, xf, tf: np.array([x0[0]]),
            t0=0.0, tf=1.0,
        )
        problem = transcribe(ocp, Mesh.uniform(2, 4), FORM_INTEGRAL)
        times = problem._point_times
        z = problem.initial_guess(lambda t: (t[:, None] ** 2, np.zeros((t.size, 1))))
        assert np.max(np.abs(problem.constraints(z))) < 1e-13
        assert times[0] == 0.0 and times[-1] == 1.0

    def test_unit_rate_three_points(self):
        """x' = 1 from x(0) = 0 on [0, 2] puts X at 0, 1, 2."""
        ocp = OcpDefinition(
            n_x=1, n_u=1, n_b=1,
            dynamics=lambda t, x, u: np.ones_like(x),
            dyn_jac_x=lambda t, x, u: np.zeros((x.shape[0], 1, 1)),
            dyn_jac_u=lambda t, x, u: np.zeros((x.shape[0], 1, 1)),
            mayer_cost=lambda x0, t0, xf, tf: 0.0,
            mayer_gradient=lambda x0, t0, xf, tf: (np.zeros(1), np.zeros(1)),
            boundary=lambda x0, t0, xf, tf: np.array([x0[0]]),
            boundary_jacobian=lambda x0, t0, xf, tf: (np.ones((1, 1)), np.zeros((1, 1))),
            t0=0.0, tf=2.0,
        )
        problem = transcribe(ocp, Mesh.single(3), FORM_INTEGRAL)
        exact = problem.initial_guess(lambda t: (t[:, None], np.zeros((t.size, 1))))
        assert np.max(np.abs(problem.constraints(exact))) <= 1e-14

        result = KktSolver(tol=1e-12, logger=RunLogger()).solve(problem, problem.initial_guess())
        assert result.converged
        assert np.allclose(problem.layout.states(result.primal)[:, 0], [0.0, 1.0, 2.0], atol=1e-12)

    def test_initial_guess_defaults(self, linear_ocp):
        problem = transcribe(linear_ocp, Mesh.single(5), FORM_INTEGRAL)
        z = problem.initial_guess()
        assert np.allclose(problem.layout.states(z), 1.0)
        assert np.allclose(problem.layout.controls(z), 0.0)

    def test_initial_guess_fills_extra_state(self, linear_ocp):
        problem = transcribe(linear_ocp, Mesh.single(5), FORM_SECOND_INTEGRAL)
        z = problem.initial_guess(lambda t: (t[:, None] + 2.0, np.zeros((t.size, 1))))
        t_extra = 0.5 * (problem.tau_extra + 1.0)
        assert problem.layout.states(z)[problem.layout.extra_node, 0] == pytest.approx(t_extra + 2.0)

    def test_hessian_symmetric_and_matches_gradient_differences(self, ex1):
        problem = transcribe(ex1.ocp, Mesh.single(5), FORM_INTEGRAL)
        z = random_point(problem)
        multipliers = np.random.default_rng(5).standard_normal(problem.n_cons)
        H = problem.lagrangian_hessian(z, multipliers)
        assert np.allclose(H, H.T, atol=0)

        step = 1e-6
        fd = np.empty_like(H)
        for col in range(problem.n_vars):
            plus, minus = z.copy(), z.copy()
            plus[col] += step
            minus[col] -= step
            fd[:, col] = (problem.lagrangian_gradient(plus, multipliers)
                          - problem.lagrangian_gradient(minus, multipliers)) / (2.0 * step)
        assert np.allclose(H, fd, atol=1e-4)

    def test_row_labels(self, linear_ocp):
        problem = transcribe_integral(linear_ocp, Mesh.uniform(3, 4))
        assert problem.row_label(0) == {'interval': 0, 'row': 0, 'component': 0}
        assert problem.row_label(3)['interval'] == 1
        assert problem.row_label(problem.n_cons - 1)['interval'] == -1

    def test_trajectory_mesh_views(self, linear_ocp):
        problem = transcribe_integral(linear_ocp, Mesh.uniform(3, 4))
        trajectory = problem.trajectory(problem.initial_guess())
        assert np.allclose(trajectory.mesh_times, [0.0, 1 / 3, 2 / 3, 1.0])
        assert trajectory.mesh_states.shape == (4, 1)
        assert trajectory.mesh_controls.shape == (4, 1)
        t, X, U = trajectory.flat()
        assert t.shape == (12,) and X.shape == (12, 1) and U.shape == (12, 1)


class TestCallbackShapes:
    """Wrongly shaped callback output is reported with its location."""

    def test_flat_dynamics_rejected(self):
        ocp = make_linear_ocp()
        ocp.dynamics = lambda t, x, u: (x + u)[:, 0]
        problem = transcribe_integral(ocp, Mesh.single(4))
        with pytest.raises(CallbackShapeError) as excinfo:
            problem.constraints(problem.initial_guess())
        assert excinfo.value.interval == 0
        assert excinfo.value.node == 0

    def test_bad_node_located(self):
        ocp = make_linear_ocp()
        ocp.dynamics = lambda t, x, u: x if np.all(t < 0.9) else np.zeros((t.size, 2))
        problem = transcribe_integral(ocp, Mesh.uniform(2, 4))
        with pytest.raises(CallbackShapeError) as excinfo:
            problem.constraints(problem.initial_guess())
        assert excinfo.value.interval == 1
        assert excinfo.value.node == 3
        assert 'interval 1' in str(excinfo.value)


class TestStateExtension:
    """Second-integral extension of a solution to tau_extra."""

    def test_quadratic_state_extended_exactly(self):
        ops = collocation_operators(5)
        nodes = ops.rule.nodes
        extension = state_extension(nodes ** 2, 2.0 * nodes, ops, delta=2.0)
        assert extension.tau_extra == ops.tau_extra
        assert extension.value[0] == pytest.approx(ops.tau_extra ** 2, abs=1e-13)
        assert np.ravel(extension(0.3))[0] == pytest.approx(0.09, abs=1e-12)

    def test_support_sorted(self):
        ops = collocation_operators(6, 0.1)
        nodes = ops.rule.nodes
        extension = state_extension(np.sin(nodes), np.cos(nodes), ops)
        assert np.all(np.diff(extension.support) > 0)
        assert extension.support.size == 7
