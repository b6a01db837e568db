"""Output-directory paths and the platform block of run manifests."""

import sys
import platform
from pathlib import Path

import numpy
import scipy


def resolve_output_dir(path) -> Path:
    """Absolute output directory with `~` expanded. Nothing is created."""
    return Path(path).expanduser().resolve()


def display_path(path, base=None) -> str:
    """
    Short form of a path for log lines.

    Paths under base (the working directory by default) are shown
    relative to it; anything else is shown in full.
    """
    path = Path(path)
    base = Path.cwd() if base is None else Path(base)
    try:
        relative = path.relative_to(base)
    except ValueError:
        return str(path)
    return str(relative) if relative.parts else "."


def get_platform_info() -> dict:
    """
    Platform and numerical library versions for run manifests.

    Byte-identical artifacts are only expected between runs that agree
    on every field here.
    """
    return {
        'system': platform.system(),
        'machine': platform.machine(),
        'python_version': platform.python_version(),
        'numpy_version': numpy.__version__,
        'scipy_version': scipy.__version__,
        'byteorder': sys.byteorder,
    }
