from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

from minlag.core.export.csv_writer import write_csv
from minlag.core.export.json_writer import file_sha256, write_json
from minlag.core.io_runtime import ensure_output_dir, write_bytes
from minlag.version import APP_VERSION

LENGTH_COLUMNS = ("t", "curve_word", "normalized_induced_length", "flat_length", "relative_gap")
SWEEP_COLUMNS = (
    "t",
    "energy",
    "l1_norm",
    "sup_distance",
    "energy_ratio_gap",
    "margin_min",
    "margin_max",
    "horizontal_ratio",
    "vertical_ratio",
    "minsky_max_excess",
    "newton_iters",
)
SPECTRUM_COLUMNS = ("metric_tag", "curve_word", "length", "iterations", "grad_norm")
INTERSECTION_COLUMNS = ("word1", "word2", "i")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def write_txt(path: str | Path, header: Dict, checks: Sequence, sections: Dict[str, List[str]], note: str) -> str:
    """
    header: {"command": ..., "sweep_sha256": ..., "complete": bool}
    checks: objects with name, claim, value, tolerance, passed
    sections: {"ENERGY": [...], "LENGTHS": [...]} rendered in fixed order
    """
    lines: List[str] = []
    lines.append(f"minlag v{APP_VERSION}")
    for key in ("command", "sweep_sha256", "complete", "error"):
        if header.get(key) is not None:
            lines.append(f"{key}: {header[key]}")
    lines.append("")

    failed = [c for c in checks if not c.passed]
    lines.append(f"Checks: {len(checks)}")
    lines.append(f"Failed: {len(failed)}")
    lines.append("")

    lines.append("CHECKS")
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        lines.append(f"{mark} {c.name} [{c.claim}] value={_fmt(c.value)} tol={_fmt(c.tolerance)}")
    lines.append("")

    for title in ("ENERGY", "LENGTHS", "SPECTRUM"):
        items = [x for x in sections.get(title, []) or [] if x]
        if not items:
            continue
        lines.append(title)
        lines.extend(items)
        lines.append("")

    lines.append("NOTES")
    lines.append(note)
    return write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _sweep_rows(report) -> List[tuple]:
    return [
        (
            p.t,
            p.energy,
            p.l1_norm,
            p.sup_distance,
            p.energy_ratio_gap,
            p.margin_min,
            p.margin_max,
            p.horizontal_ratio,
            p.vertical_ratio,
            p.minsky.max_excess,
            p.system.iterations,
        )
        for p in report.points
    ]


def export_report(report, out_dir: str | Path, *, command: str = "sweep") -> Dict[str, str]:
    """Write sweep.json, per-t solve JSON, the CSV tables and report.txt; returns name -> sha256."""
    out = ensure_output_dir(out_dir)
    paths: Dict[str, str] = {}
    blob = report.to_json()
    paths["sweep.json"] = write_json(out / "sweep.json", blob)
    for p in report.points:
        name = f"solve_t{p.t:g}.json"
        paths[name] = write_json(out / name, p.to_json())
    paths["lengths.csv"] = write_csv(out / "lengths.csv", LENGTH_COLUMNS, report.length_rows())
    paths["sweep.csv"] = write_csv(out / "sweep.csv", SWEEP_COLUMNS, _sweep_rows(report))

    sweep_sha = file_sha256(paths["sweep.json"])
    energy = [f"t={p.t:g} E={p.energy:.9f} |Phi|={p.l1_norm:.9f} D={p.sup_distance:.3e}" for p in report.points]
    lengths = [f"t={t:g} {w}: {v:.6f} vs flat {f:.6f}" for t, w, v, f, _ in report.length_rows()]
    paths["report.txt"] = write_txt(
        out / "report.txt",
        {"command": command, "sweep_sha256": sweep_sha, "complete": report.complete, "error": report.error},
        report.all_checks(),
        {"ENERGY": energy, "LENGTHS": lengths},
        report.note,
    )
    return {name: file_sha256(p) for name, p in sorted(paths.items())}


def export_spectrum(report, out_dir: str | Path) -> Dict[str, str]:
    out = ensure_output_dir(out_dir)
    rows = [(r.metric_tag, r.curve_word, r.length, r.iterations, r.grad_norm) for r in report.rows]
    paths = {
        "spectrum.csv": write_csv(out / "spectrum.csv", SPECTRUM_COLUMNS, rows),
        "intersections.csv": write_csv(out / "intersections.csv", INTERSECTION_COLUMNS, list(report.intersections)),
    }
    return {name: file_sha256(p) for name, p in sorted(paths.items())}
