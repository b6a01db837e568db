"""Transcribe, solve and post-process one benchmark configuration."""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from benchmarks.problems import BenchmarkProblem
from collocation.classic_lgl import build_classic_operators
from collocation.costate import (
    CostateEstimate, estimate_costate, filter_costate, superconvergent_costate,
)
from collocation.errors import CostateSystemError
from collocation.transcription import (
    FORM_CLASSIC, FORM_SECOND_INTEGRAL, Mesh, NlpProblem, StateExtension, Trajectory,
    state_extension, transcribe,
)
from solver.kkt_solver import KktSolver, NlpSolution
from utils.config import DEFAULT_MAX_ITER
from utils.logger import RunLogger, get_logger


@dataclass
class SolveOutcome:
    """A solved transcription with its node trajectory and costate estimates."""

    benchmark: BenchmarkProblem
    nlp: NlpProblem
    solution: NlpSolution
    trajectory: Trajectory
    tolerance: float
    costate: Optional[CostateEstimate] = None
    node_costate: Optional[List[np.ndarray]] = None
    extension: Optional[StateExtension] = None
    costate_message: str = ''

    @property
    def converged(self) -> bool:
        return self.solution.converged

    @property
    def mesh_costate(self) -> Optional[np.ndarray]:
        return None if self.costate is None else self.costate.mesh_costate


def solve_problem(benchmark: BenchmarkProblem, form: str, mesh: Mesh,
                  tol: Optional[float] = None, max_iter: int = DEFAULT_MAX_ITER,
                  tau_extra: Optional[float] = None, filtered: bool = False,
                  logger: Optional[RunLogger] = None) -> SolveOutcome:
    """
    Solve one configuration and extract its costates.

    Args:
        benchmark: Registered problem
        form: Transcription form name
        mesh: Mesh on the normalised horizon
        tol: Solver tolerance (problem default when None)
        max_iter: Newton iteration cap
        tau_extra: Extra point of the second-integral form
        filtered: Apply the costate filter to classic-form costates
        logger: Run logger

    Returns:
        SolveOutcome; costate fields stay None when extraction fails
    """
    logger = logger or get_logger()
    tol = benchmark.default_tolerance if tol is None else tol
    nlp = transcribe(benchmark.ocp, mesh, form, tau_extra=tau_extra)
    logger.info(
        f"Solving {benchmark.name} ({form}, K={mesh.intervals}, N={list(mesh.points_per_interval)}): "
        f"{nlp.n_vars} variables, {nlp.n_cons} constraints, {nlp.jacobian_nnz()} Jacobian nonzeros"
    )
    guess = benchmark.classic_guess if form == FORM_CLASSIC else None
    solution = KktSolver(tol=tol, max_iter=max_iter, logger=logger).solve(nlp, nlp.initial_guess(guess))
    trajectory = nlp.trajectory(solution.primal)
    outcome = SolveOutcome(benchmark=benchmark, nlp=nlp, solution=solution,
                           trajectory=trajectory, tolerance=tol)

    if form == FORM_SECOND_INTEGRAL:
        iv = nlp.intervals[0]
        outcome.extension = state_extension(trajectory.states[0], trajectory.dynamics[0], iv.ops, iv.delta)

    outcome.costate = estimate_costate(nlp, solution.primal, solution.multipliers)
    if form == FORM_CLASSIC:
        ops = build_classic_operators(nlp.intervals[0].rule)
        if ops.rank < ops.rule.n:
            logger.warning(f"Classic differentiation matrix has rank {ops.rank} < {ops.rule.n}: "
                           "multipliers and costate are not unique")
    node_costate = [np.array(lam) for lam in outcome.costate.Lambda]
    if form == FORM_CLASSIC and filtered:
        node_costate = [filter_costate(iv.rule.nodes, lam) for iv, lam in zip(nlp.intervals, node_costate)]
    outcome.node_costate = node_costate

    try:
        p, q = superconvergent_costate(nlp, solution.primal, outcome.costate.terminal_target)
        outcome.costate.mesh_costate = p
        outcome.costate.q = q
    except CostateSystemError as e:
        outcome.costate_message = f"interval {e.interval}: {e}"
        logger.warning(f"Mesh-point costate unavailable: {outcome.costate_message}")
    return outcome
