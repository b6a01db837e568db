"""CSV and JSON artifacts plus the run manifest."""

import csv
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from utils.config import CSV_PRECISION, SCHEMA_VERSION
from utils.hashing import hash_config, hash_file
from utils.platform_utils import get_platform_info

MANIFEST_NAME = 'manifest.json'


def format_value(value) -> str:
    """
    Text form of a CSV cell.

    Floats use 17 significant digits so doubles round-trip; None is empty.
    """
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return f"{value:.{CSV_PRECISION}g}"
    return str(value)


def _json_ready(value):
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return value.as_posix()
    return value


class ArtifactWriter:
    """Writes the artifacts of one run and records them for the manifest."""

    def __init__(self, output_dir):
        """
        Initialize the writer.

        Args:
            output_dir: Directory for artifacts (created if missing)
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.files: List[Path] = []

    def _register(self, path: Path) -> Path:
        if path not in self.files:
            self.files.append(path)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """Write a CSV with a header row; returns the file path."""
        path = self.output_dir / name
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        return self._register(path)

    def write_dict_rows(self, name: str, header: Sequence[str], rows: Iterable[Dict]) -> Path:
        return self.write_csv(name, header, ([row.get(key) for key in header] for row in rows))

    def write_json(self, name: str, payload: Dict) -> Path:
        """Write sorted, indented JSON with a schema_version field."""
        path = self.output_dir / name
        document = dict(payload)
        document.setdefault('schema_version', SCHEMA_VERSION)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(_json_ready(document), f, indent=2, sort_keys=True)
            f.write('\n')
        return self._register(path)

    def write_manifest(self, command: str, settings: Dict,
                       extra: Optional[Dict] = None) -> Path:
        """
        Write manifest.json listing every artifact with its SHA256.

        The manifest holds no wall-clock data, so reruns with the same
        settings reproduce it byte for byte.
        """
        manifest = {
            'schema_version': SCHEMA_VERSION,
            'command': command,
            'config': settings,
            'config_hash': hash_config(_json_ready(settings)),
            'platform': get_platform_info(),
            'artifacts': [
                {'file': path.name, 'sha256': hash_file(path)} for path in sorted(self.files)
            ],
        }
        if extra:
            manifest.update(extra)
        path = self.output_dir / MANIFEST_NAME
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(_json_ready(manifest), f, indent=2, sort_keys=True)
            f.write('\n')
        return path
