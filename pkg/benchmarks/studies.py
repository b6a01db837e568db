"""Error studies, the tau_extra study, and the sweep worker pool."""

import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from benchmarks.metrics import (
    REPORT_FAILED, REPORT_OK, ErrorReport, max_error, observed_orders, piecewise_interpolate,
    rmse, sample_times,
)
from benchmarks.pipeline import SolveOutcome, solve_problem
from benchmarks.problems import BenchmarkProblem, get_problem
from benchmarks.reference import reference_solution_ex2
from collocation.lgl_basis import lgl_rule
from collocation.matrices import collocation_operators
from collocation.transcription import (
    FORM_INTEGRAL, FORM_SECOND_INTEGRAL, Mesh, state_extension,
)
from db.db_manager import ResultStore
from utils.config import DEFAULT_MAX_ITER, DEFAULT_WORKERS, MIN_EXTRA_DISTANCE
from utils.logger import RunLogger, get_logger

REPORT_CANCELLED = 'cancelled'
TAU_GRID_POINTS = 21


@dataclass
class ComparisonTarget:
    """What a numeric solution is measured against, as functions of time."""

    state: Callable
    control: Callable
    node_costate: Callable
    mesh_costate: Callable
    objective: float
    angle_controls: Sequence[int] = ()


def comparison_target(benchmark: BenchmarkProblem, store: Optional[ResultStore] = None,
                      logger: Optional[RunLogger] = None) -> ComparisonTarget:
    """Analytic solution when the problem has one, else the cached fine-mesh reference."""
    if benchmark.analytic is not None:
        a = benchmark.analytic
        return ComparisonTarget(a.state, a.control, a.costate, a.costate, a.objective,
                                benchmark.angle_controls)
    if benchmark.name != 'ex2':
        raise ValueError(f"No comparison target for problem '{benchmark.name}'")
    ref = reference_solution_ex2(store=store, logger=logger)
    return ComparisonTarget(ref.state, ref.control, ref.costate_values, ref.mesh_costate_at,
                            ref.objective, benchmark.angle_controls)


def dense_state(outcome: SolveOutcome, t: np.ndarray) -> np.ndarray:
    """
    State interpolant of a solution at times t.

    Second-integral solutions use the degree-N interpolant through the extra point.
    """
    ocp = outcome.nlp.ocp
    if outcome.extension is not None:
        tau = 2.0 * (t - ocp.t0) / (ocp.tf - ocp.t0) - 1.0
        return outcome.extension(tau)
    traj = outcome.trajectory
    return piecewise_interpolate(traj.times, traj.states, t)


def _base_report(benchmark: BenchmarkProblem, form: str, mesh: Mesh, tol: float,
                 tau_extra: Optional[float]) -> ErrorReport:
    return ErrorReport(
        problem=benchmark.name,
        form=form,
        intervals=mesh.intervals,
        n_points=max(mesh.points_per_interval),
        tolerance=tol,
        tau_extra=tau_extra,
    )


def error_report(outcome: SolveOutcome, target: ComparisonTarget) -> ErrorReport:
    """
    Errors of a solve against a target.

    Single-interval solutions are compared at every node; multi-interval
    solutions compare state and control at the mesh points. The node costate
    is always compared at every node, the mesh-point costate at the mesh points.
    """
    nlp, traj, solution = outcome.nlp, outcome.trajectory, outcome.solution
    report = _base_report(outcome.benchmark, nlp.form, nlp.mesh, outcome.tolerance, nlp.tau_extra)
    report.iterations = solution.iterations
    report.kkt_residual = solution.kkt_residual
    report.objective = solution.objective
    if not solution.converged:
        report.status = REPORT_FAILED
        report.message = solution.status
        return report

    report.e_objective = abs(solution.objective - target.objective)
    t_nodes, X, U = traj.flat()
    if nlp.mesh.intervals == 1:
        report.e_state = max_error(X, target.state(t_nodes))
        report.e_control = max_error(U, target.control(t_nodes), target.angle_controls)
    else:
        t_mesh = traj.mesh_times
        report.e_state = max_error(traj.mesh_states, target.state(t_mesh))
        report.e_control = max_error(traj.mesh_controls, target.control(t_mesh), target.angle_controls)

    if outcome.node_costate is not None:
        report.e_costate = max_error(np.vstack(outcome.node_costate), target.node_costate(t_nodes))
    if outcome.mesh_costate is not None:
        report.e_mesh_costate = max_error(outcome.mesh_costate, target.mesh_costate(traj.mesh_times))
    else:
        report.message = outcome.costate_message

    samples = sample_times(nlp.ocp.t0, nlp.ocp.tf)
    report.rmse_state = rmse(dense_state(outcome, samples), target.state(samples))
    return report


class SweepRunner:
    """Runs independent sweep points on a thread pool; results keep sweep order."""

    def __init__(self, workers: int = DEFAULT_WORKERS,
                 progress_callback: Optional[Callable] = None,
                 logger: Optional[RunLogger] = None):
        """
        Initialize the runner.

        Args:
            workers: Thread count (1 runs in the calling thread)
            progress_callback: Optional callback function(current, total) for progress
            logger: Run logger
        """
        if workers < 1:
            raise ValueError(f"workers must be positive, got {workers}")
        self.workers = workers
        self.progress_callback = progress_callback
        self.logger = logger or get_logger()
        self._cancelled = threading.Event()

    def cancel(self):
        """Stop dispatching points; running points finish."""
        self._cancelled.set()

    @property
    def cancelled(self) -> bool:
        return self._cancelled.is_set()

    def _guarded(self, index: int, task: Callable, on_error: Callable):
        if self.cancelled:
            return on_error(index, None)
        try:
            return task()
        except Exception as e:
            self.logger.warning(f"Sweep point {index} failed: {e}")
            return on_error(index, e)

    def run(self, tasks: Sequence[Callable], on_error: Callable) -> List:
        """
        Run every task.

        Args:
            tasks: Zero-argument callables, one per sweep point
            on_error: on_error(index, exception) builds the result of a failed
                point; exception is None for points skipped after cancel()

        Returns:
            Results in task order
        """
        total = len(tasks)
        results: List = [None] * total
        if self.workers == 1:
            for idx, task in enumerate(tasks):
                results[idx] = self._guarded(idx, task, on_error)
                if self.progress_callback:
                    self.progress_callback(idx + 1, total)
            return results

        done = 0
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            futures = {
                pool.submit(self._guarded, idx, task, on_error): idx
                for idx, task in enumerate(tasks)
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                done += 1
                if self.progress_callback:
                    self.progress_callback(done, total)
        return results


@dataclass
class StudyResult:
    """Reports of a sweep plus observed orders (empty for fewer than three mesh sizes)."""

    reports: List[ErrorReport]
    orders: Dict[str, Optional[float]] = field(default_factory=dict)


def single_interval_sweep(n_values: Sequence[int]) -> List[Mesh]:
    return [Mesh.single(n) for n in n_values]


def mesh_sweep(k_values: Sequence[int], n_points: int) -> List[Mesh]:
    return [Mesh.uniform(k, n_points) for k in k_values]


def run_error_study(problem: str, form: str, meshes: Sequence[Mesh],
                    tol: Optional[float] = None, max_iter: int = DEFAULT_MAX_ITER,
                    tau_extra: Optional[float] = None, filtered: bool = False,
                    workers: int = DEFAULT_WORKERS, store: Optional[ResultStore] = None,
                    logger: Optional[RunLogger] = None,
                    progress_callback: Optional[Callable] = None) -> StudyResult:
    """
    Solve each mesh of a sweep and measure its errors.

    Failed points are recorded in their report and the sweep continues.
    Observed orders are fitted against h = 1/K when at least three mesh
    sizes converged.

    Args:
        problem: Registered problem name
        form: Transcription form
        meshes: Sweep points
        tol: Solver tolerance (problem default when None)
        max_iter: Newton iteration cap
        tau_extra: Extra point of the second-integral form
        filtered: Filter classic-form costates
        workers: Sweep worker threads
        store: Result store for the reference cache
        logger: Run logger
        progress_callback: Optional callback function(current, total)

    Returns:
        StudyResult in sweep order
    """
    logger = logger or get_logger()
    benchmark = get_problem(problem)
    target = comparison_target(benchmark, store=store, logger=logger)
    tol = benchmark.default_tolerance if tol is None else tol

    def make_task(mesh: Mesh):
        def task():
            outcome = solve_problem(benchmark, form, mesh, tol=tol, max_iter=max_iter,
                                    tau_extra=tau_extra, filtered=filtered, logger=logger)
            return error_report(outcome, target)
        return task

    def on_error(index: int, error: Optional[Exception]) -> ErrorReport:
        report = _base_report(benchmark, form, meshes[index], tol, tau_extra)
        report.status = REPORT_CANCELLED if error is None else REPORT_FAILED
        report.message = '' if error is None else str(error)
        return report

    runner = SweepRunner(workers=workers, progress_callback=progress_callback, logger=logger)
    reports = runner.run([make_task(mesh) for mesh in meshes], on_error)

    failed = sum(1 for r in reports if not r.ok)
    logger.info(f"Error study {problem}/{form}: {len(reports) - failed} of {len(reports)} points solved")

    orders = observed_orders(reports, logger=logger).as_dict()
    if orders:
        for report in reports:
            report.observed_order = orders
    return StudyResult(reports=reports, orders=orders)


@dataclass
class TauExtraRow:
    """One tau_extra grid point of the extra-point study."""

    tau_extra: float
    status: str
    node_delta: Optional[float] = None
    extra_state: Optional[np.ndarray] = None
    rmse_second: Optional[float] = None
    rmse_lgli: Optional[float] = None
    message: str = ''


@dataclass
class TauExtraStudy:
    """Extra-point study over a tau_extra grid against the integral-form solution."""

    n_points: int
    rows: List[TauExtraRow]
    baseline_objective: float

    @property
    def solved(self) -> List[TauExtraRow]:
        return [row for row in self.rows if row.status == REPORT_OK]

    @property
    def max_node_delta(self) -> float:
        return max((row.node_delta for row in self.solved), default=float('nan'))

    @property
    def rmse_ratio(self) -> float:
        values = [row.rmse_second for row in self.solved]
        if not values or min(values) == 0.0:
            return float('nan')
        return max(values) / min(values)


def default_tau_grid(points: int = TAU_GRID_POINTS) -> np.ndarray:
    """Interior points of an endpoint-inclusive uniform grid on [-1, 1]."""
    return np.linspace(-1.0, 1.0, points + 2)[1:-1]


def run_tau_extra_study(n_points: int, tau_values: Optional[Sequence[float]] = None,
                        problem: str = 'ex1', tol: Optional[float] = None,
                        max_iter: int = DEFAULT_MAX_ITER, workers: int = DEFAULT_WORKERS,
                        logger: Optional[RunLogger] = None,
                        progress_callback: Optional[Callable] = None) -> TauExtraStudy:
    """
    Solve the second-integral form across a tau_extra grid.

    Each point reports the largest change of the node solution (states and
    controls) against the integral form, the extra-point state, and the state
    RMSE of the second-integral interpolant and of the integral-form state
    extended to the same point. Grid points within 1e-8 of a node are skipped.

    Raises:
        ValueError: If the problem has no analytic solution
    """
    logger = logger or get_logger()
    benchmark = get_problem(problem)
    if benchmark.analytic is None:
        raise ValueError(f"The tau_extra study needs an analytic solution; '{problem}' has none")
    tol = benchmark.default_tolerance if tol is None else tol
    taus = default_tau_grid() if tau_values is None else np.asarray(tau_values, dtype=float)
    mesh = Mesh.single(n_points)
    nodes = lgl_rule(n_points).nodes

    baseline = solve_problem(benchmark, FORM_INTEGRAL, mesh, tol=tol, max_iter=max_iter, logger=logger)
    if not baseline.converged:
        raise RuntimeError(f"Integral-form baseline failed: {baseline.solution.status}")
    base_traj = baseline.trajectory
    iv = baseline.nlp.intervals[0]
    samples = sample_times(benchmark.ocp.t0, benchmark.ocp.tf)
    exact = benchmark.analytic.state(samples)
    tau_samples = 2.0 * (samples - benchmark.ocp.t0) / (benchmark.ocp.tf - benchmark.ocp.t0) - 1.0

    def make_task(tau: float):
        def task():
            if np.min(np.abs(nodes - tau)) < MIN_EXTRA_DISTANCE:
                return TauExtraRow(tau_extra=float(tau), status='skipped', message='too close to a node')
            outcome = solve_problem(benchmark, FORM_SECOND_INTEGRAL, mesh, tol=tol,
                                    max_iter=max_iter, tau_extra=float(tau), logger=logger)
            if not outcome.converged:
                return TauExtraRow(tau_extra=float(tau), status=REPORT_FAILED,
                                   message=outcome.solution.status)
            traj = outcome.trajectory
            delta = max(
                max_error(traj.states[0], base_traj.states[0]),
                max_error(traj.controls[0], base_traj.controls[0]),
            )
            lgli_extension = state_extension(
                base_traj.states[0], base_traj.dynamics[0],
                collocation_operators(n_points, float(tau)), iv.delta,
            )
            return TauExtraRow(
                tau_extra=float(tau),
                status=REPORT_OK,
                node_delta=delta,
                extra_state=np.array(traj.extra_state),
                rmse_second=rmse(outcome.extension(tau_samples), exact),
                rmse_lgli=rmse(lgli_extension(tau_samples), exact),
            )
        return task

    def on_error(index: int, error: Optional[Exception]) -> TauExtraRow:
        return TauExtraRow(
            tau_extra=float(taus[index]),
            status=REPORT_CANCELLED if error is None else REPORT_FAILED,
            message='' if error is None else str(error),
        )

    runner = SweepRunner(workers=workers, progress_callback=progress_callback, logger=logger)
    rows = runner.run([make_task(tau) for tau in taus], on_error)
    study = TauExtraStudy(n_points=n_points, rows=rows, baseline_objective=baseline.solution.objective)
    logger.info(
        f"tau_extra study N={n_points}: {len(study.solved)} of {len(rows)} points solved, "
        f"max node delta {study.max_node_delta:.3e}"
    )
    return study
