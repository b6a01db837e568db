"""Run configuration: flat key = value files merged with command-line options."""

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from utils.config import DEFAULT_MAX_ITER, DEFAULT_SEED, DEFAULT_WORKERS, MAX_TOLERANCE, MIN_TOLERANCE

KNOWN_PROBLEMS = ('ex1', 'ex2')
KNOWN_FORMS = ('integral', 'derivative-like', 'second-integral', 'classic')
SINGLE_INTERVAL_FORMS = ('second-integral', 'classic')


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _parse_int_list(text: str) -> List[int]:
    return [int(item) for item in text.replace(',', ' ').split()]


def _parse_float_list(text: str) -> List[float]:
    return [float(item) for item in text.replace(',', ' ').split()]


@dataclass
class RunConfig:
    """
    Settings of one CLI run.

    Either (intervals, n_points) or an explicit boundaries list with
    per-interval points describes the mesh. Sweeps use n_values (single
    interval) or k_values (uniform meshes of n_points each).
    """

    problem: str = 'ex1'
    form: str = 'integral'
    intervals: int = 1
    n_points: int = 10
    boundaries: Optional[List[float]] = None
    points: Optional[List[int]] = None
    n_values: Optional[List[int]] = None
    k_values: Optional[List[int]] = None
    tau_values: Optional[List[float]] = None
    tol: Optional[float] = None
    max_iter: int = DEFAULT_MAX_ITER
    tau_extra: Optional[float] = None
    filtered: bool = False
    output_dir: str = 'results'
    seed: int = DEFAULT_SEED
    workers: int = DEFAULT_WORKERS

    def interval_points(self) -> Tuple[int, ...]:
        """Points per interval of the configured mesh."""
        if self.boundaries is not None:
            if self.points is not None:
                return tuple(self.points)
            return (self.n_points,) * (len(self.boundaries) - 1)
        return (self.n_points,) * self.intervals

    def validate(self):
        """
        Raises:
            ConfigError: For unknown problems/forms or invalid combinations
        """
        if self.problem not in KNOWN_PROBLEMS:
            raise ConfigError(f"Unknown problem '{self.problem}', expected one of {KNOWN_PROBLEMS}")
        if self.form not in KNOWN_FORMS:
            raise ConfigError(f"Unknown form '{self.form}', expected one of {KNOWN_FORMS}")
        if self.intervals < 1:
            raise ConfigError(f"intervals must be positive, got {self.intervals}")
        if self.n_points < 2:
            raise ConfigError(f"n_points must be at least 2, got {self.n_points}")
        if self.boundaries is not None:
            if len(self.boundaries) < 2:
                raise ConfigError("boundaries needs at least two values")
            if self.points is not None and len(self.points) != len(self.boundaries) - 1:
                raise ConfigError(
                    f"{len(self.points)} point counts given for {len(self.boundaries) - 1} intervals"
                )
        points = self.interval_points()
        if self.form in SINGLE_INTERVAL_FORMS:
            if len(points) != 1 or (self.k_values and any(k != 1 for k in self.k_values)):
                raise ConfigError(f"The {self.form} form requires a single interval")
        if self.tol is not None and not MIN_TOLERANCE <= self.tol <= MAX_TOLERANCE:
            raise ConfigError(f"tol {self.tol} outside [{MIN_TOLERANCE}, {MAX_TOLERANCE}]")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be positive, got {self.max_iter}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.filtered and self.form != 'classic':
            raise ConfigError("Costate filtering applies to the classic form only")

    def as_dict(self) -> Dict:
        return asdict(self)


_LIST_PARSERS = {
    'boundaries': _parse_float_list,
    'points': _parse_int_list,
    'n_values': _parse_int_list,
    'k_values': _parse_int_list,
    'tau_values': _parse_float_list,
}
_SCALAR_PARSERS = {
    'problem': str,
    'form': str,
    'intervals': int,
    'n_points': int,
    'tol': float,
    'max_iter': int,
    'tau_extra': float,
    'output_dir': str,
    'seed': int,
    'workers': int,
}
_ALIASES = {'n': 'n_points', 'k': 'intervals', 'out': 'output_dir', 'filter': 'filtered', 'method': 'form'}


def normalize_key(key: str) -> str:
    """Option names with '-' and '_' interchangeable, plus short aliases."""
    key = key.strip().lstrip('-').replace('-', '_')
    return _ALIASES.get(key, key)


def _parse_value(key: str, text: str):
    if key in _LIST_PARSERS:
        return _LIST_PARSERS[key](text)
    if key == 'filtered':
        lowered = text.lower()
        if lowered not in ('1', '0', 'true', 'false', 'yes', 'no'):
            raise ConfigError(f"Invalid boolean for {key}: '{text}'")
        return lowered in ('1', 'true', 'yes')
    return _SCALAR_PARSERS[key](text)


def load_config_file(path) -> Dict:
    """
    Parse a flat key = value config file.

    Blank lines and '#' comments are ignored.

    Args:
        path: Config file path

    Returns:
        Mapping of RunConfig field names to parsed values

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: For unknown keys, malformed lines or bad values
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")

    valid = {f.name for f in fields(RunConfig)}
    values: Dict = {}
    for lineno, raw in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, text = (part.strip() for part in line.split('=', 1))
        key = normalize_key(key)
        if key not in valid:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        try:
            values[key] = _parse_value(key, text)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: invalid value for {key}: {e}")
    return values


def merge_config(file_values: Optional[Dict] = None, overrides: Optional[Dict] = None) -> RunConfig:
    """
    Build a RunConfig from defaults, file values, then non-None overrides.

    Raises:
        ConfigError: If the merged configuration is invalid
    """
    merged: Dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is not None:
                merged[normalize_key(key)] = value
    valid = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - valid
    if unknown:
        raise ConfigError(f"Unknown settings: {sorted(unknown)}")
    config = RunConfig(**merged)
    config.validate()
    return config
