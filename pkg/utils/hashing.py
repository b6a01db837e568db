"""SHA256 hashes for run manifests and reference-solution cache keys."""

import hashlib
import json
from pathlib import Path

CHUNK_SIZE = 1 << 16


def hash_bytes(data: bytes) -> str:
    """Hexadecimal SHA256 of raw bytes."""
    return hashlib.sha256(data).hexdigest()


def hash_string(data: str) -> str:
    """Hexadecimal SHA256 of the UTF-8 encoding of a string."""
    return hash_bytes(data.encode('utf-8'))


def hash_file(file_path, chunk_size: int = CHUNK_SIZE) -> str:
    """
    Stream a file through SHA256.

    Args:
        file_path: Artifact to hash
        chunk_size: Bytes read per call

    Returns:
        str: Hexadecimal digest, identical to hash_bytes of the contents

    Raises:
        FileNotFoundError: If nothing exists at file_path
        ValueError: If file_path is a directory or other non-file
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    if not path.is_file():
        raise ValueError(f"Path is not a file: {path}")

    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def hash_config(settings: dict) -> str:
    """
    Hash a settings mapping independent of key order.

    Args:
        settings: JSON-serialisable mapping

    Returns:
        str: Hexadecimal SHA256 of the canonical JSON encoding
    """
    return hash_string(json.dumps(settings, sort_keys=True, default=str))
