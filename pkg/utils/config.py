"""Global settings, numerical defaults, and paths configuration."""

import os
import sys
from pathlib import Path

# Platform detection
IS_WINDOWS = sys.platform.startswith('win')
IS_MACOS = sys.platform == 'darwin'
IS_LINUX = sys.platform.startswith('linux')

# Base directory for the application (repository root)
BASE_DIR = Path(__file__).parent.parent

# Data directory for the result store and logs
# LGLI_DATA_DIR wins over the platform default
_override = os.environ.get('LGLI_DATA_DIR')
if _override:
    DATA_DIR = Path(_override)
elif IS_WINDOWS:
    appdata = os.environ.get('LOCALAPPDATA')
    if appdata:
        DATA_DIR = Path(appdata) / "LGLCollocation" / "data"
    else:
        DATA_DIR = BASE_DIR / "data"
elif IS_MACOS:
    DATA_DIR = Path.home() / "Library" / "Application Support" / "LGLCollocation" / "data"
elif IS_LINUX:
    DATA_DIR = Path.home() / ".local" / "share" / "lgl-collocation" / "data"
else:
    DATA_DIR = BASE_DIR / "data"

# SQLite result store (reference solutions, run history)
DB_PATH = DATA_DIR / "results.db"

# Log file directory (file logging is optional)
LOG_DIR = DATA_DIR / "logs"


def ensure_data_dirs():
    """Create the data and log directories if they are missing."""
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    LOG_DIR.mkdir(parents=True, exist_ok=True)


# Solver defaults
DEFAULT_TOLERANCE = 1e-12
EX1_TOLERANCE = 1e-12
EX2_TOLERANCE = 1e-8
DEFAULT_MAX_ITER = 100
MIN_TOLERANCE = 1e-14
MAX_TOLERANCE = 1e-4

# Inertia-correcting regularization schedule
REG_START = 1e-10
REG_FACTOR = 10.0
REG_MAX = 1e-2
RETRY_REG_FACTOR = 100.0

# Constraint-block shift, used only when the KKT matrix has zero pivots
CONSTRAINT_REG = 1e-8

# Relative singular-value cutoff for least-squares initial multipliers
MULTIPLIER_RCOND = 1e-10

# Backtracking line search
ARMIJO_FACTOR = 1e-4
BACKTRACK_FACTOR = 0.5
MIN_STEP = 1e-12

# Finite differences (relative step, scaled by max(1, |entry|))
FD_STEP = 1e-6
JACOBIAN_CHECK_TOLERANCE = 1e-6
JACOBIAN_CHECK_PROBES = 5

# LGL rule construction
NODE_TOLERANCE = 1e-14
NODE_MAX_ITER = 100
MIN_EXTRA_DISTANCE = 1e-8

# Benchmarks
RMSE_SAMPLES = 1000
PRE_ASYMPTOTIC_ERROR = 1e-1
REFERENCE_INTERVALS = 40
REFERENCE_POINTS = 8
REFERENCE_TOLERANCE = 1e-10
GUESS_RK4_STEPS = 2000
EX2_GUESS_CONTROL = 0.001

# Artifacts
CSV_PRECISION = 17
SCHEMA_VERSION = "1.0"
DEFAULT_SEED = 0
DEFAULT_WORKERS = 4
