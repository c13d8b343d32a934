from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

from minlag.core.io_runtime import write_bytes


def fmt(value) -> str:
    """17 significant digits in scientific notation for floats; ints and text as is."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.16e}"
    return str(value)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buf = io.StringIO(newline="")
    buf.write("# columns: " + ", ".join(columns) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    return write_bytes(path, render_csv(columns, rows))
