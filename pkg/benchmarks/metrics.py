"""Error metrics, dense interpolants and convergence-order fits."""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from collocation.lgl_basis import interpolate
from utils.config import PRE_ASYMPTOTIC_ERROR, RMSE_SAMPLES

REPORT_OK = 'ok'
REPORT_FAILED = 'failed'

# CSV column order of a report row
REPORT_FIELDS = (
    'problem', 'form', 'intervals', 'n_points', 'tau_extra', 'tolerance',
    'status', 'iterations', 'kkt_residual', 'objective', 'e_objective',
    'e_state', 'e_control', 'e_costate', 'e_mesh_costate', 'rmse_state',
    'message',
)


@dataclass
class ErrorReport:
    """
    Errors of one sweep point against the analytic or reference solution.

    Error fields are None when the solve failed or no comparison target exists.
    """

    problem: str
    form: str
    intervals: int
    n_points: int
    tolerance: float
    tau_extra: Optional[float] = None
    status: str = REPORT_OK
    iterations: int = 0
    kkt_residual: Optional[float] = None
    objective: Optional[float] = None
    e_objective: Optional[float] = None
    e_state: Optional[float] = None
    e_control: Optional[float] = None
    e_costate: Optional[float] = None
    e_mesh_costate: Optional[float] = None
    rmse_state: Optional[float] = None
    observed_order: Optional[Dict[str, float]] = None
    message: str = ''

    @property
    def ok(self) -> bool:
        return self.status == REPORT_OK

    def to_row(self) -> Dict:
        """Flat mapping in REPORT_FIELDS order."""
        values = asdict(self)
        return {name: values[name] for name in REPORT_FIELDS}


def wrap_angle(delta: np.ndarray) -> np.ndarray:
    """Map angle differences to (-pi, pi]."""
    delta = np.asarray(delta, dtype=float)
    return np.arctan2(np.sin(delta), np.cos(delta))


def max_error(numeric: np.ndarray, reference: np.ndarray,
              angle_columns: Sequence[int] = ()) -> float:
    """
    Max over rows and columns of |numeric - reference|.

    Columns listed in angle_columns are compared by wrapped difference.
    """
    numeric = np.atleast_2d(np.asarray(numeric, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if numeric.shape != reference.shape:
        raise ValueError(f"Shape mismatch: {numeric.shape} vs {reference.shape}")
    if numeric.size == 0:
        return 0.0
    diff = numeric - reference
    for column in angle_columns:
        diff[:, column] = wrap_angle(diff[:, column])
    return float(np.max(np.abs(diff)))


def sample_times(t0: float, tf: float, samples: int = RMSE_SAMPLES) -> np.ndarray:
    """Endpoint-inclusive uniform grid."""
    return np.linspace(t0, tf, samples)


def piecewise_interpolate(times: List[np.ndarray], values: List[np.ndarray], t) -> np.ndarray:
    """
    Evaluate a piecewise Lagrange interpolant given node values per interval.

    A sample on a shared mesh point is taken from the earlier interval.

    Args:
        times: Node times per interval, each strictly increasing
        values: Node values per interval, one row per node
        t: Sample times within [times[0][0], times[-1][-1]]

    Returns:
        One row per sample
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    starts = np.array([tk[0] for tk in times])
    owner = np.clip(np.searchsorted(starts, t, side='left') - 1, 0, len(times) - 1)
    first = values[0]
    out = np.empty((t.size,) + np.asarray(first).shape[1:])
    for k in np.unique(owner):
        mask = owner == k
        out[mask] = interpolate(times[k], values[k], t[mask])
    return out


def rmse(numeric: np.ndarray, reference: np.ndarray) -> float:
    """Root-mean-square over all samples and components."""
    diff = np.asarray(numeric, dtype=float) - np.asarray(reference, dtype=float)
    return float(np.sqrt(np.mean(diff * diff)))


def fit_order(h: Sequence[float], errors: Sequence[Optional[float]], logger=None,
              label: str = 'error') -> Optional[float]:
    """
    Least-squares slope of log(error) against log(h).

    The coarsest point is dropped when its error exceeds the pre-asymptotic
    threshold. Returns None with fewer than three usable points.
    """
    pairs = [
        (float(hk), float(ek)) for hk, ek in zip(h, errors)
        if ek is not None and np.isfinite(ek) and ek > 0.0
    ]
    if len(pairs) < 3:
        return None
    pairs.sort(key=lambda p: -p[0])
    if pairs[0][1] > PRE_ASYMPTOTIC_ERROR:
        if logger is not None:
            logger.warning(
                f"Dropping pre-asymptotic point h={pairs[0][0]:.3g} ({label}={pairs[0][1]:.3e}) from order fit"
            )
        pairs = pairs[1:]
        if len(pairs) < 2:
            return None
    log_h = np.log([p[0] for p in pairs])
    log_e = np.log([p[1] for p in pairs])
    slope, _ = np.polyfit(log_h, log_e, 1)
    return float(slope)


@dataclass
class OrderSummary:
    """Observed orders of a mesh sweep, keyed by error name."""

    orders: Dict[str, Optional[float]] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Optional[float]]:
        return dict(self.orders)


def observed_orders(reports: List[ErrorReport], logger=None,
                    names: Sequence[str] = ('e_state', 'e_control', 'e_costate', 'e_mesh_costate')) -> OrderSummary:
    """
    Fit observed orders over a sweep of mesh sizes (h = 1/K).

    Reports with a failed solve are ignored; sweeps with fewer than three
    mesh sizes give no orders.
    """
    usable = [r for r in reports if r.ok]
    if len({r.intervals for r in usable}) < 3:
        return OrderSummary()
    h = [1.0 / r.intervals for r in usable]
    summary = OrderSummary()
    for name in names:
        summary.orders[name] = fit_order(h, [getattr(r, name) for r in usable], logger=logger, label=name)
    return summary
