"""Tests for costate maps, adjoint diagnostics, mesh-point costates and the filter."""

import numpy as np
import pytest
from scipy.interpolate import interp1d

from benchmarks.pipeline import solve_problem
from benchmarks.problems import BenchmarkProblem, ex1_control, ex1_costate, ex1_state
from collocation.costate import (
    adjoint_residual, control_stationarity, costate_from_derivative_like, costate_from_integral,
    filter_costate, hamiltonian, multiplier_transform, unscaled_multipliers,
)
from collocation.errors import CostateSystemError
from collocation.lgl_basis import lgl_rule
from collocation.matrices import collocation_operators
from collocation.transcription import (
    FORM_CLASSIC, FORM_INTEGRAL, FORM_SECOND_INTEGRAL, Mesh, OcpDefinition,
)
from utils.logger import RunLogger


def node_costate_error(outcome) -> float:
    times = outcome.trajectory.times[0]
    return float(np.max(np.abs(outcome.node_costate[0] - ex1_costate(times))))


def node_control_error(outcome) -> float:
    times = outcome.trajectory.times[0]
    return float(np.max(np.abs(outcome.trajectory.controls[0] - ex1_control(times))))


def compressed_ocp(ocp: OcpDefinition, factor: float) -> OcpDefinition:
    """The same problem on [t0, t0 + (tf - t0) / factor] with dynamics multiplied by factor."""
    t0 = ocp.t0

    def stretch(t):
        return t0 + factor * (np.asarray(t, dtype=float) - t0)

    return OcpDefinition(
        n_x=ocp.n_x, n_u=ocp.n_u, n_b=ocp.n_b,
        dynamics=lambda t, x, u: factor * ocp.eval_dynamics(stretch(t), x, u),
        dyn_jac_x=lambda t, x, u: factor * ocp.eval_jac_x(stretch(t), x, u),
        dyn_jac_u=lambda t, x, u: factor * ocp.eval_jac_u(stretch(t), x, u),
        mayer_cost=ocp.mayer_cost,
        mayer_gradient=ocp.mayer_gradient,
        boundary=ocp.boundary,
        boundary_jacobian=ocp.boundary_jacobian,
        t0=t0, tf=t0 + (ocp.tf - t0) / factor,
        guess=lambda t: ocp.guess_at(stretch(t)),
        name=f'{ocp.name}-compressed',
    )


def reference_filter(points, values):
    """Step-by-step filter: cut, causal FIR with zero state, drop transient, extrapolate."""
    n = len(points)
    cut = values[2:n - 2]
    out = []
    for i in range(len(cut)):
        prev1 = cut[i - 1] if i >= 1 else 0.0
        prev2 = cut[i - 2] if i >= 2 else 0.0
        out.append(0.25 * cut[i] + (0.5 * prev1 + 0.25 * prev2))
    kept = np.array(out[2:])
    kept_points = points[3:n - 3]

    def line(x, x_lo, x_hi, y_lo, y_hi):
        return (y_hi - y_lo) / (x_hi - x_lo) * (x - x_lo) + y_lo

    head = [line(x, kept_points[0], kept_points[1], kept[0], kept[1]) for x in points[:3]]
    tail = [line(x, kept_points[-2], kept_points[-1], kept[-2], kept[-1]) for x in points[n - 3:]]
    return np.concatenate([head, kept, tail])


class TestCostateMaps:
    """Multiplier-to-costate maps on Example 1."""

    def test_forms_agree(self, ex1_integral_n10, ex1_derivative_n10):
        integral = ex1_integral_n10.node_costate[0]
        derivative = ex1_derivative_n10.node_costate[0]
        assert np.max(np.abs(integral - derivative)) <= 1e-9

    def test_multiplier_transform(self, ex1_integral_n10, ex1_derivative_n10):
        iv = ex1_integral_n10.nlp.intervals[0]
        M = unscaled_multipliers(ex1_integral_n10.nlp, ex1_integral_n10.solution.multipliers)[0]
        S = unscaled_multipliers(ex1_derivative_n10.nlp, ex1_derivative_n10.solution.multipliers)[0]
        assert np.max(np.abs(multiplier_transform(M, iv.ops.A_tilde) - S)) <= 1e-6

    def test_transversality(self, ex1):
        outcome = solve_problem(ex1, 'integral', Mesh.single(20))
        estimate = outcome.costate
        assert np.allclose(estimate.terminal_target, [-1.0])
        assert np.max(np.abs(estimate.terminal_gap)) <= 1e-8
        assert np.max(np.abs(estimate.initial_gap)) <= 1e-8

    def test_terminal_gap_decays_with_n(self, ex1):
        gaps = [float(np.max(np.abs(solve_problem(ex1, 'integral', Mesh.single(n)).costate.terminal_gap)))
                for n in (6, 10, 14, 18)]
        for coarse, fine in zip(gaps, gaps[1:]):
            assert fine < coarse or fine <= 1e-11

    def test_primal_forms_agree(self, ex1_integral_n10, ex1_derivative_n10):
        integral = ex1_integral_n10.trajectory
        derivative = ex1_derivative_n10.trajectory
        assert np.max(np.abs(integral.states[0] - derivative.states[0])) <= 1e-9
        assert np.max(np.abs(integral.controls[0] - derivative.controls[0])) <= 1e-9

    def test_time_scaling_consistent(self, ex1):
        """Ex1 on [0, 1] with doubled dynamics has the same node states, controls and costate."""
        scaled = BenchmarkProblem(name='ex1-half', ocp=compressed_ocp(ex1.ocp, 2.0))
        original = solve_problem(ex1, 'integral', Mesh.single(10))
        compressed = solve_problem(scaled, 'integral', Mesh.single(10))
        assert compressed.converged
        assert np.allclose(compressed.trajectory.times[0], 0.5 * original.trajectory.times[0])
        assert np.max(np.abs(compressed.trajectory.states[0] - original.trajectory.states[0])) <= 1e-9
        assert np.max(np.abs(compressed.trajectory.controls[0] - original.trajectory.controls[0])) <= 1e-9
        assert np.max(np.abs(compressed.node_costate[0] - original.node_costate[0])) <= 1e-8
        assert compressed.solution.objective == pytest.approx(original.solution.objective, abs=1e-12)

    def test_high_order_costate_accuracy(self, ex1):
        outcome = solve_problem(ex1, 'integral', Mesh.single(30))
        assert outcome.converged
        assert node_costate_error(outcome) <= 1e-9

    def test_second_integral_extra_multiplier_vanishes(self, ex1):
        outcome = solve_problem(ex1, FORM_SECOND_INTEGRAL, Mesh.single(10))
        M = unscaled_multipliers(outcome.nlp, outcome.solution.multipliers)[0]
        assert M.shape[0] == 10
        assert np.max(np.abs(M[-1])) <= 1e-8
        assert node_costate_error(outcome) <= 1e-4

    def test_hand_maps(self):
        """N = 3 maps with unit multipliers."""
        ops = collocation_operators(3)
        rule = ops.rule
        M = np.ones((2, 1))
        expected = (ops.A_tilde.T @ M) / rule.weights[:, None]
        assert np.allclose(costate_from_integral(M, rule, ops.A_tilde), expected)
        S = multiplier_transform(M, ops.A_tilde)
        assert np.allclose(costate_from_derivative_like(S, rule, ops.alpha), expected, atol=1e-13)


class TestAdjointDiagnostics:
    """Transformed adjoint system, stationarity and Hamiltonian on Example 1."""

    def test_adjoint_residual_small(self, ex1_integral_n10):
        outcome = ex1_integral_n10
        estimate = outcome.costate
        residual = adjoint_residual(estimate.Lambda[0], estimate.mu, outcome.nlp,
                                    outcome.solution.primal, estimate.terminal_target)
        assert residual.integral.shape == (10, 1)
        assert residual.derivative.shape == (9, 1)
        assert residual.max_abs <= 1e-8

    def test_adjoint_residual_single_interval_only(self, ex1):
        outcome = solve_problem(ex1, 'integral', Mesh.uniform(2, 4))
        estimate = outcome.costate
        with pytest.raises(ValueError):
            adjoint_residual(estimate.Lambda[0], estimate.mu, outcome.nlp,
                             outcome.solution.primal, estimate.terminal_target)

    def test_control_stationarity(self, ex1_integral_n10):
        outcome = ex1_integral_n10
        dH_du = control_stationarity(outcome.costate.Lambda[0], outcome.nlp, outcome.solution.primal)
        assert dH_du.shape == (10, 1)
        assert np.max(np.abs(dH_du)) <= 1e-8

    def test_hamiltonian_constant(self, ex1_integral_n10):
        """Autonomous dynamics keep H constant along the solution."""
        outcome = ex1_integral_n10
        H = hamiltonian(outcome.costate.Lambda[0], outcome.nlp, outcome.solution.primal)
        assert np.ptp(H) <= 1e-4


class TestMeshCostate:
    """Mesh-point costate sweep."""

    def test_single_interval_endpoints(self, ex1_integral_n10):
        p = ex1_integral_n10.mesh_costate
        assert p.shape == (2, 1)
        assert p[1, 0] == pytest.approx(-1.0)
        assert p[0, 0] == pytest.approx(ex1_costate(0.0)[0, 0], abs=1e-5)

    def test_multi_interval_mesh_costate(self, ex1):
        outcome = solve_problem(ex1, 'integral', Mesh.uniform(8, 3))
        p = outcome.mesh_costate
        assert p.shape == (9, 1)
        exact = ex1_costate(outcome.trajectory.mesh_times)
        assert np.max(np.abs(p - exact)) <= 1e-3
        assert outcome.costate_message == ''

    def test_costate_system_error_names_interval(self):
        error = CostateSystemError("Singular costate system", interval=3)
        assert error.interval == 3
        assert 'interval 3' in str(error)


class TestFilter:
    """Three-tap costate filter."""

    def test_matches_step_by_step_reference(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            n = int(rng.integers(8, 31))
            points = lgl_rule(n).nodes
            values = rng.standard_normal(n)
            assert np.allclose(filter_costate(points, values), reference_filter(points, values),
                               rtol=0, atol=1e-14)

    def test_length_twelve_input(self):
        points = lgl_rule(12).nodes
        values = np.random.default_rng(12).standard_normal(12)
        assert np.allclose(filter_costate(points, values), reference_filter(points, values),
                           rtol=0, atol=1e-14)

    def test_constant_preserved(self):
        points = lgl_rule(10).nodes
        assert np.allclose(filter_costate(points, np.full((10, 1), 2.5)), 2.5)

    def test_column_shape_kept(self):
        points = lgl_rule(9).nodes
        values = np.random.default_rng(1).standard_normal((9, 3))
        filtered = filter_costate(points[:, None], values)
        assert filtered.shape == (9, 3)
        for col in range(3):
            assert np.allclose(filtered[:, col], reference_filter(points, values[:, col]), atol=1e-14)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            filter_costate(lgl_rule(7).nodes, np.zeros(7))

    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            filter_costate(lgl_rule(9).nodes, np.zeros(10))

    def test_interp_extrapolation_matches(self):
        """Leading values come from the line through the first two retained samples."""
        points = lgl_rule(10).nodes
        values = np.linspace(0.0, 1.0, 10) ** 2
        filtered = filter_costate(points, values)
        reference = reference_filter(points, values)
        line = interp1d(points[3:7], reference[3:7], fill_value='extrapolate')
        assert filtered[0] == pytest.approx(float(line(points[0])), abs=1e-12)


class TestClassicBaseline:
    """Classic LGL costate oscillation and its filtered version."""

    @pytest.fixture(scope='class')
    def classic_n30(self, ex1):
        return solve_problem(ex1, FORM_CLASSIC, Mesh.single(30))

    def test_low_order_solve_converges(self, ex1):
        """N = 10 converges; its control error stays orders above the integral form's."""
        logger = RunLogger()
        classic = solve_problem(ex1, FORM_CLASSIC, Mesh.single(10), logger=logger)
        integral = solve_problem(ex1, FORM_INTEGRAL, Mesh.single(10), logger=logger)
        assert classic.converged
        assert 1e-3 <= node_control_error(classic) <= 1.0
        assert node_control_error(integral) <= 1e-5
        assert any('not unique' in entry for entry in logger.get_logs())

    def test_unfiltered_costate_oscillates(self, classic_n30):
        assert classic_n30.converged
        assert node_costate_error(classic_n30) >= 1e-3

    def test_state_still_accurate(self, classic_n30):
        times = classic_n30.trajectory.times[0]
        assert np.max(np.abs(classic_n30.trajectory.states[0] - ex1_state(times))) <= 1e-6

    def test_filter_reduces_error(self, ex1, classic_n30):
        filtered = solve_problem(ex1, FORM_CLASSIC, Mesh.single(30), filtered=True)
        assert node_costate_error(filtered) < node_costate_error(classic_n30)
