"""Optimal control problems, meshes, and their transcription into equality-constrained NLPs."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from collocation.errors import CallbackShapeError
from collocation.lgl_basis import QuadratureRule, interpolate
from collocation.matrices import CollocationOperators, collocation_operators
from utils.config import DEFAULT_SEED, FD_STEP, JACOBIAN_CHECK_PROBES, JACOBIAN_CHECK_TOLERANCE

FORM_INTEGRAL = 'integral'
FORM_DERIVATIVE_LIKE = 'derivative-like'
FORM_SECOND_INTEGRAL = 'second-integral'
FORM_CLASSIC = 'classic'
FORMS = (FORM_INTEGRAL, FORM_DERIVATIVE_LIKE, FORM_SECOND_INTEGRAL, FORM_CLASSIC)

BOUNDARY_ROW = -1


def _fd_steps(values: np.ndarray) -> np.ndarray:
    return FD_STEP * np.maximum(1.0, np.abs(values))


@dataclass
class OcpDefinition:
    """
    A Mayer-cost optimal control problem with fixed initial and final times.

    Dynamics and Jacobian callbacks are vectorised over nodes: they receive
    t of shape (m,), x of shape (m, n_x), u of shape (m, n_u) and return
    (m, n_x), (m, n_x, n_x) and (m, n_x, n_u). Endpoint callbacks receive
    (x0, t0, xf, tf). Callbacks must be re-entrant; sweeps call them from
    several threads. Missing Jacobians and gradients fall back to central
    finite differences.
    """

    n_x: int
    n_u: int
    n_b: int
    dynamics: Callable
    mayer_cost: Callable
    boundary: Callable
    t0: float
    tf: float
    dyn_jac_x: Optional[Callable] = None
    dyn_jac_u: Optional[Callable] = None
    mayer_gradient: Optional[Callable] = None
    boundary_jacobian: Optional[Callable] = None
    guess: Optional[Callable] = None
    x0_guess: Optional[np.ndarray] = None
    xf_guess: Optional[np.ndarray] = None
    name: str = 'ocp'

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"Final time {self.tf} must exceed initial time {self.t0}")
        if self.n_x < 1 or self.n_u < 0 or self.n_b < 0:
            raise ValueError(f"Invalid dimensions n_x={self.n_x}, n_u={self.n_u}, n_b={self.n_b}")

    # Dynamics

    def _locate_bad_node(self, fn: Callable, expected: tuple, t, x, u,
                         node_labels: Optional[Sequence[Tuple[int, int]]]):
        for idx in range(t.shape[0]):
            single = np.asarray(fn(t[idx:idx + 1], x[idx:idx + 1], u[idx:idx + 1]))
            if single.shape != (1,) + expected:
                interval, node = node_labels[idx] if node_labels is not None else (None, idx)
                return interval, node, single.shape
        return None, None, None

    def _call_checked(self, fn: Callable, label: str, expected: tuple, t, x, u,
                      node_labels=None) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.asarray(fn(t, x, u), dtype=float)
        full = (t.shape[0],) + expected
        if out.shape != full:
            interval, node, shape = self._locate_bad_node(fn, expected, t, x, u, node_labels)
            shown = shape if shape is not None else out.shape
            raise CallbackShapeError(
                f"{label} returned shape {shown}, expected {full if shape is None else (1,) + expected}",
                interval=interval, node=node,
            )
        return out

    def eval_dynamics(self, t, x, u, node_labels=None) -> np.ndarray:
        """Evaluate f at a batch of nodes, shape (m, n_x)."""
        return self._call_checked(self.dynamics, 'dynamics', (self.n_x,), t, x, u, node_labels)

    def eval_jac_x(self, t, x, u, node_labels=None) -> np.ndarray:
        """df/dx at a batch of nodes, shape (m, n_x, n_x)."""
        if self.dyn_jac_x is not None:
            return self._call_checked(self.dyn_jac_x, 'dyn_jac_x', (self.n_x, self.n_x), t, x, u, node_labels)
        return self.fd_jac_x(t, x, u)

    def eval_jac_u(self, t, x, u, node_labels=None) -> np.ndarray:
        """df/du at a batch of nodes, shape (m, n_x, n_u)."""
        if self.dyn_jac_u is not None:
            return self._call_checked(self.dyn_jac_u, 'dyn_jac_u', (self.n_x, self.n_u), t, x, u, node_labels)
        return self.fd_jac_u(t, x, u)

    def fd_jac_x(self, t, x, u) -> np.ndarray:
        """Central finite-difference df/dx."""
        x = np.asarray(x, dtype=float)
        jac = np.empty((x.shape[0], self.n_x, self.n_x))
        for col in range(self.n_x):
            step = _fd_steps(x[:, col])
            plus, minus = x.copy(), x.copy()
            plus[:, col] += step
            minus[:, col] -= step
            jac[:, :, col] = (self.eval_dynamics(t, plus, u) - self.eval_dynamics(t, minus, u)) / (2.0 * step[:, None])
        return jac

    def fd_jac_u(self, t, x, u) -> np.ndarray:
        """Central finite-difference df/du."""
        u = np.asarray(u, dtype=float)
        jac = np.empty((u.shape[0], self.n_x, self.n_u))
        for col in range(self.n_u):
            step = _fd_steps(u[:, col])
            plus, minus = u.copy(), u.copy()
            plus[:, col] += step
            minus[:, col] -= step
            jac[:, :, col] = (self.eval_dynamics(t, x, plus) - self.eval_dynamics(t, x, minus)) / (2.0 * step[:, None])
        return jac

    # Endpoint functions

    def eval_mayer(self, x0, xf) -> float:
        return float(self.mayer_cost(np.asarray(x0, dtype=float), self.t0, np.asarray(xf, dtype=float), self.tf))

    def eval_boundary(self, x0, xf) -> np.ndarray:
        out = np.asarray(self.boundary(np.asarray(x0, dtype=float), self.t0,
                                       np.asarray(xf, dtype=float), self.tf), dtype=float).reshape(-1)
        if out.shape != (self.n_b,):
            raise CallbackShapeError(f"boundary returned {out.shape[0]} values, expected {self.n_b}")
        return out

    def _endpoint_fd(self, fn: Callable, x0, xf) -> Tuple[np.ndarray, np.ndarray]:
        z = np.concatenate([x0, xf]).astype(float)
        columns = []
        for col in range(z.size):
            step = _fd_steps(z[col:col + 1])[0]
            plus, minus = z.copy(), z.copy()
            plus[col] += step
            minus[col] -= step
            diff = (np.asarray(fn(plus[:self.n_x], plus[self.n_x:]))
                    - np.asarray(fn(minus[:self.n_x], minus[self.n_x:]))) / (2.0 * step)
            columns.append(np.atleast_1d(diff))
        jac = np.stack(columns, axis=-1)
        return jac[..., :self.n_x], jac[..., self.n_x:]

    def eval_mayer_gradient(self, x0, xf) -> Tuple[np.ndarray, np.ndarray]:
        """Gradients of the Mayer cost with respect to x0 and xf."""
        x0 = np.asarray(x0, dtype=float)
        xf = np.asarray(xf, dtype=float)
        if self.mayer_gradient is not None:
            g0, gf = self.mayer_gradient(x0, self.t0, xf, self.tf)
            return np.asarray(g0, dtype=float).reshape(self.n_x), np.asarray(gf, dtype=float).reshape(self.n_x)
        g0, gf = self._endpoint_fd(lambda a, b: np.array([self.eval_mayer(a, b)]), x0, xf)
        return g0[0], gf[0]

    def eval_boundary_jacobian(self, x0, xf) -> Tuple[np.ndarray, np.ndarray]:
        """Jacobians of the boundary function with respect to x0 and xf, each (n_b, n_x)."""
        x0 = np.asarray(x0, dtype=float)
        xf = np.asarray(xf, dtype=float)
        if self.boundary_jacobian is not None:
            J0, Jf = self.boundary_jacobian(x0, self.t0, xf, self.tf)
            return (np.asarray(J0, dtype=float).reshape(self.n_b, self.n_x),
                    np.asarray(Jf, dtype=float).reshape(self.n_b, self.n_x))
        return self._endpoint_fd(self.eval_boundary, x0, xf)

    # Guess and validation

    def guess_at(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Initial guess (X, U) at the given times.

        Uses the guess callback when present; otherwise linear interpolation
        between x0_guess and xf_guess (zeros when absent) with zero controls.
        """
        t = np.asarray(t, dtype=float)
        if self.guess is not None:
            X, U = self.guess(t)
            return (np.asarray(X, dtype=float).reshape(t.size, self.n_x),
                    np.asarray(U, dtype=float).reshape(t.size, self.n_u))
        x0 = np.zeros(self.n_x) if self.x0_guess is None else np.asarray(self.x0_guess, dtype=float)
        xf = x0 if self.xf_guess is None else np.asarray(self.xf_guess, dtype=float)
        s = ((t - self.t0) / (self.tf - self.t0))[:, None]
        return x0[None, :] * (1.0 - s) + xf[None, :] * s, np.zeros((t.size, self.n_u))

    def check_jacobians(self, probes: int = JACOBIAN_CHECK_PROBES, seed: int = DEFAULT_SEED) -> float:
        """
        Largest relative gap between supplied dynamics Jacobians and finite differences.

        Probe points are the guess at random times, perturbed slightly.
        """
        if self.dyn_jac_x is None and self.dyn_jac_u is None:
            return 0.0
        rng = np.random.default_rng(seed)
        t = np.sort(rng.uniform(self.t0, self.tf, probes))
        if self.guess is not None or self.x0_guess is not None:
            x, u = self.guess_at(t)
        else:
            x, u = np.ones((probes, self.n_x)), np.ones((probes, self.n_u))
        x = x + 0.05 * rng.standard_normal(x.shape)
        u = u + 0.05 * rng.standard_normal(u.shape)

        worst = 0.0
        if self.dyn_jac_x is not None:
            fd = self.fd_jac_x(t, x, u)
            worst = max(worst, float(np.max(np.abs(self.eval_jac_x(t, x, u) - fd) / np.maximum(1.0, np.abs(fd)))))
        if self.dyn_jac_u is not None and self.n_u > 0:
            fd = self.fd_jac_u(t, x, u)
            worst = max(worst, float(np.max(np.abs(self.eval_jac_u(t, x, u) - fd) / np.maximum(1.0, np.abs(fd)))))
        return worst

    def validate(self, probes: int = JACOBIAN_CHECK_PROBES, seed: int = DEFAULT_SEED):
        """
        Raises:
            ValueError: If supplied Jacobians disagree with finite differences
        """
        gap = self.check_jacobians(probes, seed)
        if gap > JACOBIAN_CHECK_TOLERANCE:
            raise ValueError(
                f"Dynamics Jacobians of '{self.name}' disagree with finite differences "
                f"(relative gap {gap:.3e})"
            )


@dataclass(frozen=True)
class Mesh:
    """Mesh points T_0 = -1 < ... < T_K = +1 and points per interval."""

    boundaries: Tuple[float, ...]
    points_per_interval: Tuple[int, ...]

    def __post_init__(self):
        bounds = np.asarray(self.boundaries, dtype=float)
        if bounds.size < 2:
            raise ValueError("Mesh needs at least two boundaries")
        if bounds[0] != -1.0 or bounds[-1] != 1.0:
            raise ValueError(f"Mesh must span [-1, 1], got [{bounds[0]}, {bounds[-1]}]")
        if np.any(np.diff(bounds) <= 0.0):
            raise ValueError("Mesh points must be strictly increasing")
        if len(self.points_per_interval) != bounds.size - 1:
            raise ValueError(
                f"{len(self.points_per_interval)} point counts given for {bounds.size - 1} intervals"
            )
        if any(n < 2 for n in self.points_per_interval):
            raise ValueError(f"Each interval needs at least 2 points, got {list(self.points_per_interval)}")
        object.__setattr__(self, 'boundaries', tuple(float(b) for b in bounds))
        object.__setattr__(self, 'points_per_interval', tuple(int(n) for n in self.points_per_interval))

    @classmethod
    def uniform(cls, intervals: int, n_points: int) -> 'Mesh':
        """K equal intervals with N points each."""
        if intervals < 1:
            raise ValueError(f"Mesh needs at least one interval, got {intervals}")
        bounds = np.linspace(-1.0, 1.0, intervals + 1)
        bounds[0], bounds[-1] = -1.0, 1.0
        return cls(tuple(bounds), (n_points,) * intervals)

    @classmethod
    def single(cls, n_points: int) -> 'Mesh':
        return cls((-1.0, 1.0), (n_points,))

    @property
    def intervals(self) -> int:
        return len(self.points_per_interval)

    @property
    def widths(self) -> np.ndarray:
        """Interval lengths h_k on [-1, 1]."""
        return np.diff(np.asarray(self.boundaries))


@dataclass(frozen=True)
class VariableLayout:
    """
    Index map of the NLP variable vector.

    States are stored node-major, one row per distinct state node: mesh-point
    states are shared between adjacent intervals, and the second integral form
    appends one extra node after the last mesh point. Controls follow, one row
    per collocation node of every interval.
    """

    n_x: int
    n_u: int
    node_offsets: Tuple[int, ...]
    control_offsets: Tuple[int, ...]
    n_mesh_nodes: int
    n_control_nodes: int
    has_extra: bool

    @classmethod
    def build(cls, mesh: Mesh, n_x: int, n_u: int, has_extra: bool = False) -> 'VariableLayout':
        node_offsets, control_offsets = [0], [0]
        for n in mesh.points_per_interval:
            node_offsets.append(node_offsets[-1] + n - 1)
            control_offsets.append(control_offsets[-1] + n)
        return cls(n_x, n_u, tuple(node_offsets[:-1]), tuple(control_offsets[:-1]),
                   node_offsets[-1] + 1, control_offsets[-1], has_extra)

    @property
    def n_state_nodes(self) -> int:
        return self.n_mesh_nodes + (1 if self.has_extra else 0)

    @property
    def control_start(self) -> int:
        return self.n_state_nodes * self.n_x

    @property
    def n_vars(self) -> int:
        return self.control_start + self.n_control_nodes * self.n_u

    @property
    def extra_node(self) -> int:
        return self.n_mesh_nodes

    def interval_nodes(self, k: int, n_points: int) -> np.ndarray:
        """Global state-node ids of interval k."""
        return self.node_offsets[k] + np.arange(n_points)

    def state_vars(self, nodes) -> np.ndarray:
        """Variable indices (len(nodes), n_x) of the given state nodes."""
        nodes = np.asarray(nodes)
        return nodes[..., None] * self.n_x + np.arange(self.n_x)

    def control_vars(self, k: int, local) -> np.ndarray:
        """Variable indices (len(local), n_u) of interval k's controls."""
        rows = self.control_offsets[k] + np.asarray(local)
        return self.control_start + rows[..., None] * self.n_u + np.arange(self.n_u)

    def states(self, z: np.ndarray) -> np.ndarray:
        """All state nodes as an (n_state_nodes, n_x) view."""
        return z[:self.control_start].reshape(self.n_state_nodes, self.n_x)

    def controls(self, z: np.ndarray) -> np.ndarray:
        """All control rows as an (n_control_nodes, n_u) view."""
        return z[self.control_start:].reshape(self.n_control_nodes, self.n_u)


@dataclass
class CollocationBlock:
    """
    Defect rows of one interval: C_x @ X[state_nodes] + C_f @ F(interval nodes).

    C_x already carries the 2 / Delta_k scaling.
    """

    interval: int
    row_start: int
    state_nodes: np.ndarray
    C_x: np.ndarray
    C_f: np.ndarray

    @property
    def rows(self) -> int:
        return self.C_x.shape[0]


@dataclass
class IntervalData:
    """Collocation data of one interval: rule, times, node ids, Delta_k."""

    index: int
    rule: QuadratureRule
    ops: CollocationOperators
    times: np.ndarray
    nodes: np.ndarray
    delta: float


@dataclass
class Trajectory:
    """Solution values at the collocation nodes of each interval."""

    times: List[np.ndarray]
    states: List[np.ndarray]
    controls: List[np.ndarray]
    dynamics: List[np.ndarray]
    extra_state: Optional[np.ndarray] = None

    @property
    def mesh_times(self) -> np.ndarray:
        return np.array([t[0] for t in self.times] + [self.times[-1][-1]])

    @property
    def mesh_states(self) -> np.ndarray:
        return np.vstack([x[0] for x in self.states] + [self.states[-1][-1]])

    @property
    def mesh_controls(self) -> np.ndarray:
        """Control at each mesh point: interval starts, then the final node."""
        return np.vstack([u[0] for u in self.controls] + [self.controls[-1][-1]])

    def flat(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(t, X, U) over all intervals, nodes concatenated."""
        return np.concatenate(self.times), np.vstack(self.states), np.vstack(self.controls)


class NlpProblem:
    """
    Equality-constrained NLP of a transcribed optimal control problem.

    Constraint rows are ordered interval by interval, each block row-major over
    (collocation row, state component), followed by the boundary rows. The
    Lagrangian is objective + multipliers . constraints.
    """

    def __init__(self, ocp: OcpDefinition, mesh: Mesh, form: str,
                 tau_extra: Optional[float] = None):
        if form not in FORMS:
            raise ValueError(f"Unknown form '{form}', expected one of {FORMS}")
        if form in (FORM_SECOND_INTEGRAL, FORM_CLASSIC) and mesh.intervals != 1:
            raise ValueError(f"The {form} form needs a single-interval mesh, got {mesh.intervals} intervals")

        self.ocp = ocp
        self.mesh = mesh
        self.form = form
        self.layout = VariableLayout.build(mesh, ocp.n_x, ocp.n_u, has_extra=(form == FORM_SECOND_INTEGRAL))
        self.intervals = self._build_intervals(tau_extra)
        self.tau_extra = self.intervals[0].ops.tau_extra if form == FORM_SECOND_INTEGRAL else None
        self.blocks = self._build_blocks()

        self.n_defects = sum(b.rows for b in self.blocks) * ocp.n_x
        self.n_cons = self.n_defects + ocp.n_b
        self.n_vars = self.layout.n_vars

        self._point_interval = np.concatenate([np.full(iv.rule.n, iv.index) for iv in self.intervals])
        self._point_local = np.concatenate([np.arange(iv.rule.n) for iv in self.intervals])
        self._point_times = np.concatenate([iv.times for iv in self.intervals])
        self._point_nodes = np.concatenate([iv.nodes for iv in self.intervals])
        self._point_labels = list(zip(self._point_interval.tolist(), self._point_local.tolist()))
        self._point_controls = np.vstack([
            self.layout.control_vars(iv.index, np.arange(iv.rule.n)) for iv in self.intervals
        ]) if ocp.n_u > 0 else np.zeros((len(self._point_times), 0), dtype=int)
        self._point_starts = np.cumsum([0] + [iv.rule.n for iv in self.intervals])

        self._build_row_metadata()
        self._build_pattern()

    # Construction

    def _build_intervals(self, tau_extra: Optional[float]) -> List[IntervalData]:
        ocp, mesh = self.ocp, self.mesh
        half_span = 0.5 * (ocp.tf - ocp.t0)
        intervals = []
        for k, n in enumerate(mesh.points_per_interval):
            lo, hi = mesh.boundaries[k], mesh.boundaries[k + 1]
            ops = collocation_operators(n, tau_extra if self.form == FORM_SECOND_INTEGRAL else None)
            tau = lo + 0.5 * (ops.rule.nodes + 1.0) * (hi - lo)
            tau[0], tau[-1] = lo, hi
            intervals.append(IntervalData(
                index=k,
                rule=ops.rule,
                ops=ops,
                times=ocp.t0 + half_span * (tau + 1.0),
                nodes=self.layout.interval_nodes(k, n),
                delta=(hi - lo) * half_span,
            ))
        return intervals

    def _build_blocks(self) -> List[CollocationBlock]:
        blocks, row_start = [], 0
        for iv in self.intervals:
            n, ops, scale = iv.rule.n, iv.ops, 2.0 / iv.delta
            state_nodes = iv.nodes
            if self.form == FORM_INTEGRAL:
                C_x = np.hstack([np.ones((n - 1, 1)), -np.eye(n - 1)])
                C_f = np.array(ops.A_tilde)
            elif self.form == FORM_DERIVATIVE_LIKE:
                C_x = -np.array(ops.E)
                C_f = np.hstack([ops.alpha[:, None], np.eye(n - 1)])
            elif self.form == FORM_SECOND_INTEGRAL:
                C_x = np.zeros((n, n + 1))
                C_x[:, 0] = 1.0
                C_x[:n - 1, 1:n] = -np.eye(n - 1)
                C_x[n - 1, n] = -1.0
                C_f = np.array(ops.B)
                state_nodes = np.append(iv.nodes, self.layout.extra_node)
            else:
                # classic_lgl builds on this module
                from collocation.classic_lgl import build_classic_operators
                C_x = -np.array(build_classic_operators(iv.rule).D_classic)
                C_f = np.eye(n)
            blocks.append(CollocationBlock(iv.index, row_start, state_nodes, scale * C_x, C_f))
            row_start += C_x.shape[0]
        return blocks

    def _build_row_metadata(self):
        n_x = self.ocp.n_x
        interval, row, component = [], [], []
        for block in self.blocks:
            interval.append(np.full(block.rows * n_x, block.interval))
            row.append(np.repeat(np.arange(block.rows), n_x))
            component.append(np.tile(np.arange(n_x), block.rows))
        interval.append(np.full(self.ocp.n_b, BOUNDARY_ROW))
        row.append(np.arange(self.ocp.n_b))
        component.append(np.full(self.ocp.n_b, -1))
        self.row_interval = np.concatenate(interval)
        self.row_index = np.concatenate(row)
        self.row_component = np.concatenate(component)

    def _block_rows(self, block: CollocationBlock) -> np.ndarray:
        """Constraint indices (rows, n_x) of a block."""
        n_x = self.ocp.n_x
        return block.row_start * n_x + np.arange(block.rows * n_x).reshape(block.rows, n_x)

    def _build_pattern(self):
        n_x, n_u = self.ocp.n_x, self.ocp.n_u
        rows, cols = [], []
        self._fx_slices, self._fu_slices = [], []
        layout = self.layout

        for block in self.blocks:
            iv = self.intervals[block.interval]
            crow = self._block_rows(block)

            r, p = np.nonzero(block.C_x)
            rows.append(crow[r].ravel())
            cols.append(layout.state_vars(block.state_nodes[p]).ravel())

            r, j = np.nonzero(block.C_f)
            # rows (nnz, n_x, n_x) over (m, l)
            rows.append(np.broadcast_to(crow[r][:, :, None], (r.size, n_x, n_x)).ravel())
            cols.append(np.broadcast_to(layout.state_vars(iv.nodes[j])[:, None, :], (r.size, n_x, n_x)).ravel())
            if n_u > 0:
                rows.append(np.broadcast_to(crow[r][:, :, None], (r.size, n_x, n_u)).ravel())
                cols.append(np.broadcast_to(layout.control_vars(iv.index, j)[:, None, :], (r.size, n_x, n_u)).ravel())

        n_b = self.ocp.n_b
        if n_b > 0:
            brows = self.n_defects + np.arange(n_b)
            first = layout.state_vars([0])[0]
            last = layout.state_vars([layout.n_mesh_nodes - 1])[0]
            rows.append(np.repeat(brows, n_x))
            cols.append(np.tile(first, n_b))
            rows.append(np.repeat(brows, n_x))
            cols.append(np.tile(last, n_b))

        self._pattern_rows = np.concatenate(rows).astype(np.int64)
        self._pattern_cols = np.concatenate(cols).astype(np.int64)
        self._pattern = sparse.coo_matrix(
            (np.ones(self._pattern_rows.size), (self._pattern_rows, self._pattern_cols)),
            shape=(self.n_cons, self.n_vars),
        ).tocsr()
        self._pattern.data[:] = 1.0

    # Evaluation helpers

    def _point_values(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = self.layout.states(z)[self._point_nodes]
        U = z[self._point_controls] if self.ocp.n_u > 0 else np.zeros((len(self._point_nodes), 0))
        return X, U

    def _interval_slice(self, k: int) -> slice:
        return slice(self._point_starts[k], self._point_starts[k + 1])

    def endpoints(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        states = self.layout.states(z)
        return states[0], states[self.layout.n_mesh_nodes - 1]

    # NLP interface

    def objective(self, z: np.ndarray) -> float:
        x0, xf = self.endpoints(z)
        return self.ocp.eval_mayer(x0, xf)

    def objective_gradient(self, z: np.ndarray) -> np.ndarray:
        x0, xf = self.endpoints(z)
        g0, gf = self.ocp.eval_mayer_gradient(x0, xf)
        grad = np.zeros(self.n_vars)
        grad[self.layout.state_vars([0])[0]] += g0
        grad[self.layout.state_vars([self.layout.n_mesh_nodes - 1])[0]] += gf
        return grad

    def constraints(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        X, U = self._point_values(z)
        F = self.ocp.eval_dynamics(self._point_times, X, U, self._point_labels)
        states = self.layout.states(z)
        values = np.empty(self.n_cons)
        for block in self.blocks:
            defect = block.C_x @ states[block.state_nodes] + block.C_f @ F[self._interval_slice(block.interval)]
            values[self._block_rows(block).ravel()] = defect.ravel()
        x0, xf = self.endpoints(z)
        values[self.n_defects:] = self.ocp.eval_boundary(x0, xf)
        return values

    def _jacobian_values(self, z: np.ndarray) -> np.ndarray:
        X, U = self._point_values(z)
        fx = self.ocp.eval_jac_x(self._point_times, X, U, self._point_labels)
        fu = self.ocp.eval_jac_u(self._point_times, X, U, self._point_labels) if self.ocp.n_u > 0 else None
        n_x = self.ocp.n_x

        values = []
        for block in self.blocks:
            sl = self._interval_slice(block.interval)
            r, p = np.nonzero(block.C_x)
            values.append(np.repeat(block.C_x[r, p], n_x))
            r, j = np.nonzero(block.C_f)
            coef = block.C_f[r, j]
            values.append((coef[:, None, None] * fx[sl][j]).ravel())
            if fu is not None:
                values.append((coef[:, None, None] * fu[sl][j]).ravel())

        if self.ocp.n_b > 0:
            x0, xf = self.endpoints(z)
            J0, Jf = self.ocp.eval_boundary_jacobian(x0, xf)
            values.append(J0.ravel())
            values.append(Jf.ravel())
        return np.concatenate(values)

    def jacobian(self, z: np.ndarray) -> sparse.csr_matrix:
        """Constraint Jacobian in CSR form (duplicate entries summed)."""
        z = np.asarray(z, dtype=float)
        return sparse.coo_matrix(
            (self._jacobian_values(z), (self._pattern_rows, self._pattern_cols)),
            shape=(self.n_cons, self.n_vars),
        ).tocsr()

    def sparsity_pattern(self) -> sparse.csr_matrix:
        """Structural nonzeros of the constraint Jacobian (entries are 1)."""
        return self._pattern.copy()

    def jacobian_nnz(self) -> int:
        return int(self._pattern.nnz)

    def dynamics_block_nnz(self) -> int:
        """Structural nonzeros contributed by the C_f (dynamics) terms."""
        n_x, n_u = self.ocp.n_x, self.ocp.n_u
        per_entry = n_x * (n_x + n_u)
        return int(sum(np.count_nonzero(block.C_f) for block in self.blocks) * per_entry)

    def lagrangian_gradient(self, z: np.ndarray, multipliers: np.ndarray) -> np.ndarray:
        return self.objective_gradient(z) + self.jacobian(z).T @ np.asarray(multipliers, dtype=float)

    def point_weights(self, multipliers: np.ndarray) -> np.ndarray:
        """Effective multiplier weights omega (points, n_x) on each dynamics evaluation."""
        omega = np.zeros((len(self._point_times), self.ocp.n_x))
        for block in self.blocks:
            lam = multipliers[self._block_rows(block)]
            omega[self._interval_slice(block.interval)] += block.C_f.T @ lam
        return omega

    def lagrangian_hessian(self, z: np.ndarray, multipliers: np.ndarray) -> np.ndarray:
        """
        Dense Hessian of the Lagrangian.

        Node blocks are one-sided differences of [f_x^T w; f_u^T w]; the
        endpoint block differences the Mayer gradient plus J^T nu. Blocks are
        symmetrised before assembly.
        """
        z = np.asarray(z, dtype=float)
        multipliers = np.asarray(multipliers, dtype=float)
        n_x, n_u = self.ocp.n_x, self.ocp.n_u
        H = np.zeros((self.n_vars, self.n_vars))

        omega = self.point_weights(multipliers)
        X, U = self._point_values(z)
        t = self._point_times

        def node_gradient(Xp, Up):
            gx = np.einsum('pml,pm->pl', self.ocp.eval_jac_x(t, Xp, Up), omega)
            if n_u == 0:
                return gx
            gu = np.einsum('pml,pm->pl', self.ocp.eval_jac_u(t, Xp, Up), omega)
            return np.hstack([gx, gu])

        base = node_gradient(X, U)
        width = n_x + n_u
        blocks = np.empty((len(t), width, width))
        for d in range(width):
            Xp, Up = X.copy(), U.copy()
            if d < n_x:
                step = _fd_steps(X[:, d])
                Xp[:, d] += step
            else:
                step = _fd_steps(U[:, d - n_x])
                Up[:, d - n_x] += step
            blocks[:, :, d] = (node_gradient(Xp, Up) - base) / step[:, None]
        blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))

        state_idx = self.layout.state_vars(self._point_nodes)
        idx = np.hstack([state_idx, self._point_controls]) if n_u > 0 else state_idx
        np.add.at(H, (idx[:, :, None], idx[:, None, :]), blocks)

        x0, xf = self.endpoints(z)
        nu = multipliers[self.n_defects:]

        def endpoint_gradient(v):
            a, b = v[:n_x], v[n_x:]
            g0, gf = self.ocp.eval_mayer_gradient(a, b)
            if self.ocp.n_b > 0:
                J0, Jf = self.ocp.eval_boundary_jacobian(a, b)
                g0 = g0 + J0.T @ nu
                gf = gf + Jf.T @ nu
            return np.concatenate([g0, gf])

        v = np.concatenate([x0, xf])
        base_e = endpoint_gradient(v)
        H_e = np.empty((2 * n_x, 2 * n_x))
        for d in range(2 * n_x):
            step = _fd_steps(v[d:d + 1])[0]
            vp = v.copy()
            vp[d] += step
            H_e[:, d] = (endpoint_gradient(vp) - base_e) / step
        H_e = 0.5 * (H_e + H_e.T)
        end_idx = np.concatenate([self.layout.state_vars([0])[0],
                                  self.layout.state_vars([self.layout.n_mesh_nodes - 1])[0]])
        H[np.ix_(end_idx, end_idx)] += H_e
        return H

    # Solution plumbing

    def initial_guess(self, guess: Optional[Callable] = None) -> np.ndarray:
        """
        Primal vector from a guess callback t -> (X, U), or the problem default.
        """
        ocp = self.ocp
        source = ocp.guess_at if guess is None else guess
        z = np.zeros(self.n_vars)
        states = self.layout.states(z)
        X, U = source(self._point_times)
        X = np.asarray(X, dtype=float).reshape(len(self._point_times), ocp.n_x)
        U = np.asarray(U, dtype=float).reshape(len(self._point_times), ocp.n_u)
        states[self._point_nodes] = X
        if ocp.n_u > 0:
            z[self._point_controls] = U
        if self.layout.has_extra:
            t_extra = ocp.t0 + 0.5 * (ocp.tf - ocp.t0) * (self.tau_extra + 1.0)
            x_extra, _ = source(np.array([t_extra]))
            states[self.layout.extra_node] = np.asarray(x_extra, dtype=float).reshape(ocp.n_x)
        return z

    def trajectory(self, z: np.ndarray) -> Trajectory:
        """Node values per interval at a primal point."""
        z = np.asarray(z, dtype=float)
        X, U = self._point_values(z)
        F = self.ocp.eval_dynamics(self._point_times, X, U, self._point_labels)
        slices = [self._interval_slice(k) for k in range(len(self.intervals))]
        extra = self.layout.states(z)[self.layout.extra_node].copy() if self.layout.has_extra else None
        return Trajectory(
            times=[self._point_times[s].copy() for s in slices],
            states=[X[s].copy() for s in slices],
            controls=[U[s].copy() for s in slices],
            dynamics=[F[s].copy() for s in slices],
            extra_state=extra,
        )

    def defect_multipliers(self, multipliers: np.ndarray) -> List[np.ndarray]:
        """Solver multipliers of each interval's defect rows, shape (rows, n_x)."""
        multipliers = np.asarray(multipliers, dtype=float)
        return [multipliers[self._block_rows(block)] for block in self.blocks]

    def boundary_multipliers(self, multipliers: np.ndarray) -> np.ndarray:
        return np.asarray(multipliers, dtype=float)[self.n_defects:]

    def row_label(self, row: int) -> Dict[str, int]:
        """Metadata of a constraint row: interval (-1 for boundary rows), row, component."""
        return {
            'interval': int(self.row_interval[row]),
            'row': int(self.row_index[row]),
            'component': int(self.row_component[row]),
        }


def transcribe_integral(ocp: OcpDefinition, mesh: Mesh) -> NlpProblem:
    """Integral form: (2/Delta)(X_1 - X_i) + (A_tilde F)_i = 0 per interval."""
    return NlpProblem(ocp, mesh, FORM_INTEGRAL)


def transcribe_derivative_like(ocp: OcpDefinition, mesh: Mesh) -> NlpProblem:
    """Derivative-like form: ([alpha | I] F)_i - (2/Delta)(E X)_i = 0 per interval."""
    return NlpProblem(ocp, mesh, FORM_DERIVATIVE_LIKE)


def transcribe_second_integral(ocp: OcpDefinition, mesh: Mesh,
                               tau_extra: Optional[float] = None) -> NlpProblem:
    """Integral form plus the quadrature row to the non-collocated point tau_extra."""
    return NlpProblem(ocp, mesh, FORM_SECOND_INTEGRAL, tau_extra=tau_extra)


def transcribe(ocp: OcpDefinition, mesh: Mesh, form: str,
               tau_extra: Optional[float] = None) -> NlpProblem:
    """Transcribe with the named form."""
    return NlpProblem(ocp, mesh, form, tau_extra=tau_extra)


@dataclass
class StateExtension:
    """State at the extra point plus the degree-N interpolant over N+1 points."""

    tau_extra: float
    value: np.ndarray
    support: np.ndarray = field(repr=False)
    support_values: np.ndarray = field(repr=False)

    def __call__(self, tau) -> np.ndarray:
        """Evaluate the interpolant at tau in [-1, 1]."""
        return interpolate(self.support, self.support_values, tau)


def state_extension(states: np.ndarray, dynamics: np.ndarray, ops: CollocationOperators,
                    delta: float = 2.0) -> StateExtension:
    """
    Extend a single-interval solution to tau_extra.

    X_{N+1} = X_1 + (Delta / 2) A_{N+1,:} F, with F the dynamics at the nodes
    in time units and Delta the interval length.

    Args:
        states: Node states (N, n_x)
        dynamics: Dynamics at the nodes (N, n_x)
        ops: Operators carrying tau_extra
        delta: Interval length in time units

    Returns:
        StateExtension over the N LGL points and tau_extra
    """
    states = np.asarray(states, dtype=float)
    states = states.reshape(states.shape[0], -1)
    dynamics = np.asarray(dynamics, dtype=float)
    dynamics = dynamics.reshape(dynamics.shape[0], -1)
    value = states[0] + 0.5 * delta * (ops.extra_row @ dynamics)

    points = np.append(ops.rule.nodes, ops.tau_extra)
    values = np.vstack([states, value])
    order = np.argsort(points)
    return StateExtension(ops.tau_extra, value, points[order], values[order])
