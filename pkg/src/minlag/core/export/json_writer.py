from __future__ import annotations

import json
import math
from hashlib import sha256
from pathlib import Path
from typing import Any, Dict

import numpy as np

from minlag.core.io_runtime import write_bytes


def _plain(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def dumps(blob: Dict) -> bytes:
    return (json.dumps(_plain(blob), indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_json(path: str | Path, blob: Dict) -> str:
    return write_bytes(path, dumps(blob))


def file_sha256(path: str | Path) -> str:
    return sha256(Path(path).read_bytes()).hexdigest()
