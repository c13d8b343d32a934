from __future__ import annotations

import os
from pathlib import Path

from minlag.errors import IoFailure


def _mkdir_0700(p: Path) -> None:
    p.mkdir(parents=True, exist_ok=True)
    try:
        p.chmod(0o700)
    except Exception:
        pass  # platforms without chmod semantics


def ensure_output_dir(dir_path: str | Path) -> Path:
    p = Path(dir_path)
    try:
        _mkdir_0700(p)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {p}: {exc}") from exc
    return p


def open_for_write(path: str | Path) -> int:
    """Truncating open with owner-only permissions; returns a raw descriptor."""
    flags = os.O_WRONLY | os.O_CREAT | os.O_TRUNC
    try:
        return os.open(str(path), flags, 0o600)
    except OSError as exc:
        raise IoFailure(f"cannot open {path} for writing: {exc}") from exc


def write_bytes(path: str | Path, data: bytes) -> str:
    p = Path(path)
    ensure_output_dir(p.parent)
    fd = open_for_write(p)
    try:
        with os.fdopen(fd, "wb", closefd=True) as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"write to {p} failed: {exc}") from exc
    return str(p)
