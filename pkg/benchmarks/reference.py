"""Fine-mesh self reference for problems without a closed-form solution."""

import io
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.interpolate import interp1d

from benchmarks.metrics import piecewise_interpolate
from benchmarks.pipeline import solve_problem
from benchmarks.problems import BenchmarkProblem, get_problem
from collocation.transcription import FORM_INTEGRAL, Mesh
from db.db_manager import ResultStore
from utils.config import (
    REFERENCE_INTERVALS, REFERENCE_POINTS, REFERENCE_TOLERANCE, SCHEMA_VERSION,
)
from utils.hashing import hash_config
from utils.logger import RunLogger, get_logger

_MESH_MATCH = 1e-9
_FIELDS = (
    'times', 'states', 'controls', 'costate',
    'mesh_times', 'mesh_states', 'mesh_controls', 'mesh_costate', 'objective',
)


class ReferenceSolveError(RuntimeError):
    """The reference solve did not converge."""

    def __init__(self, message: str, status: str):
        super().__init__(message)
        self.status = status


@dataclass
class ReferenceSolution:
    """
    Node and mesh-point values of a fine-mesh solve.

    Node arrays are stacked per interval: times (K, N), states (K, N, n_x),
    controls (K, N, n_u), costate (K, N, n_x).
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    costate: np.ndarray
    mesh_times: np.ndarray
    mesh_states: np.ndarray
    mesh_controls: np.ndarray
    mesh_costate: np.ndarray
    objective: float

    def _match_mesh(self, t: np.ndarray) -> Optional[np.ndarray]:
        idx = np.clip(np.searchsorted(self.mesh_times, t), 0, len(self.mesh_times) - 1)
        lower = np.clip(idx - 1, 0, len(self.mesh_times) - 1)
        nearest = np.where(
            np.abs(self.mesh_times[lower] - t) < np.abs(self.mesh_times[idx] - t), lower, idx
        )
        if np.all(np.abs(self.mesh_times[nearest] - t) <= _MESH_MATCH):
            return nearest
        return None

    def state(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return piecewise_interpolate(list(self.times), list(self.states), t)

    def control(self, t) -> np.ndarray:
        """Control with mesh points taken from the interval that starts there."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        matched = self._match_mesh(t)
        if matched is not None:
            return self.mesh_controls[matched]
        return piecewise_interpolate(list(self.times), list(self.controls), t)

    def costate_at_nodes(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return piecewise_interpolate(list(self.times), list(self.costate), t)

    def costate_values(self, t) -> np.ndarray:
        """Costate from mesh points when t lies on them, else the node interpolant."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        matched = self._match_mesh(t)
        if matched is not None:
            return self.mesh_costate[matched]
        return self.costate_at_nodes(t)

    def mesh_costate_at(self, t) -> np.ndarray:
        """Mesh-point costate; cubic interpolation between reference mesh points."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        matched = self._match_mesh(t)
        if matched is not None:
            return self.mesh_costate[matched]
        return interp1d(self.mesh_times, self.mesh_costate, axis=0, kind='cubic')(t)

    def to_bytes(self) -> bytes:
        buffer = io.BytesIO()
        np.savez(buffer, **{name: np.asarray(getattr(self, name)) for name in _FIELDS})
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, payload: bytes) -> 'ReferenceSolution':
        with np.load(io.BytesIO(payload)) as archive:
            values = {name: np.array(archive[name]) for name in _FIELDS}
        values['objective'] = float(values['objective'])
        return cls(**values)


def reference_settings(problem: str = 'ex2', intervals: int = REFERENCE_INTERVALS,
                       n_points: int = REFERENCE_POINTS, tol: float = REFERENCE_TOLERANCE) -> Dict:
    """Settings that identify a cached reference."""
    return {
        'problem': problem,
        'form': FORM_INTEGRAL,
        'intervals': int(intervals),
        'n_points': int(n_points),
        'tolerance': float(tol),
        'schema_version': SCHEMA_VERSION,
    }


def compute_reference(benchmark: BenchmarkProblem, intervals: int = REFERENCE_INTERVALS,
                      n_points: int = REFERENCE_POINTS, tol: float = REFERENCE_TOLERANCE,
                      logger: Optional[RunLogger] = None) -> ReferenceSolution:
    """
    Integral-form solve on a uniform fine mesh plus its mesh-point costate.

    Raises:
        ReferenceSolveError: If the solve or the mesh costate fails
    """
    logger = logger or get_logger()
    outcome = solve_problem(benchmark, FORM_INTEGRAL, Mesh.uniform(intervals, n_points),
                            tol=tol, logger=logger)
    if not outcome.converged:
        raise ReferenceSolveError(
            f"Reference solve of {benchmark.name} failed: {outcome.solution.status} "
            f"(KKT residual {outcome.solution.kkt_residual:.3e})",
            status=outcome.solution.status,
        )
    if outcome.mesh_costate is None:
        raise ReferenceSolveError(
            f"Reference mesh costate of {benchmark.name} failed: {outcome.costate_message}",
            status='costate_failure',
        )
    traj = outcome.trajectory
    return ReferenceSolution(
        times=np.stack(traj.times),
        states=np.stack(traj.states),
        controls=np.stack(traj.controls),
        costate=np.stack(outcome.node_costate),
        mesh_times=traj.mesh_times,
        mesh_states=traj.mesh_states,
        mesh_controls=traj.mesh_controls,
        mesh_costate=outcome.mesh_costate,
        objective=outcome.solution.objective,
    )


def reference_solution_ex2(store: Optional[ResultStore] = None,
                           intervals: int = REFERENCE_INTERVALS,
                           n_points: int = REFERENCE_POINTS,
                           tol: float = REFERENCE_TOLERANCE,
                           logger: Optional[RunLogger] = None) -> ReferenceSolution:
    """
    The orbit-raising reference, loaded from the store when cached.

    A cached payload whose hash no longer matches is recomputed.

    Args:
        store: Result store for the cache (no caching when None)
        intervals: Reference mesh intervals
        n_points: Points per interval
        tol: Solver tolerance
        logger: Run logger

    Returns:
        ReferenceSolution

    Raises:
        ReferenceSolveError: If the reference solve fails
    """
    logger = logger or get_logger()
    config_hash = hash_config(reference_settings('ex2', intervals, n_points, tol))

    if store is not None:
        payload = store.load_reference(config_hash)
        if payload is not None:
            logger.info(f"Loaded cached ex2 reference ({intervals}x{n_points}, {config_hash[:12]})")
            return ReferenceSolution.from_bytes(payload)
        if store.get_reference_info(config_hash) is not None:
            logger.warning("Cached ex2 reference failed hash verification, recomputing")

    logger.info(f"Computing ex2 reference on {intervals} intervals with N={n_points}")
    reference = compute_reference(get_problem('ex2'), intervals, n_points, tol, logger)
    if store is not None:
        store.save_reference(config_hash, 'ex2', reference.to_bytes())
    return reference
