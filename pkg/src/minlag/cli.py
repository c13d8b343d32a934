from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from minlag.core.engine.sweep import build_surface, prepare_ray, run_ray_sweep, unit_differential
from minlag.core.export.json_writer import dumps, write_json
from minlag.core.export.report_render import export_report, export_spectrum
from minlag.core.hyperbolic import group_to_json
from minlag.core.io_runtime import ensure_output_dir
from minlag.core.mesh import mesh_to_json
from minlag.core.metrics import make_metric
from minlag.core.solver import (
    chart_identity_gap,
    energy_identity,
    energy_l1_bounds,
    jacobian_integral,
    maximal_domination_check,
    solve_bochner,
    solve_maximal,
    subharmonicity_check,
    system_to_json,
)
from minlag.core.qdiff import find_zeros, l1_norm
from minlag.core.spectrum import compute_spectrum
from minlag.errors import ConfigError, IoFailure, NumericalAbort
from minlag.settings import ExperimentConfig, load_config
from minlag.tools.acceptance import print_verdict, run_acceptance_suite
from minlag.version import APP_VERSION

logger = logging.getLogger(__name__)

SPECTRUM_TAGS = ("hyperbolic", "flat", "induced_full", "induced_normalized", "pullback_1", "pullback_2", "maximal")


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(out_dir=args.out, threads=args.threads)


def _cmd_build_surface(args: argparse.Namespace) -> int:
    cfg = _config(args)
    surface = build_surface(cfg)
    out = ensure_output_dir(cfg.out_dir)
    basis = surface.basis
    blob = {
        "group": group_to_json(surface.group),
        "mesh": mesh_to_json(surface.mesh),
        "series": {
            "exponents": list(basis.exponents),
            "word_length": basis.radius,
            "elements": len(basis.elements),
            "relative_residuals": basis.relative_residuals().tolist(),
        },
    }
    path = write_json(out / "surface.json", blob)
    mesh = surface.mesh
    print(f"Vertices: {mesh.n_vertices} | Triangles: {mesh.triangles.shape[0]} | Euler: {mesh.euler_characteristic()}")
    print(f"Series elements: {len(basis.elements)} | tail: {max(basis.relative_residuals(), default=0.0):.3e}")
    print("JSON:", path)
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    cfg = _config(args)
    surface = build_surface(cfg)
    mesh = surface.mesh
    q = unit_differential(surface, cfg.basis).scaled(args.t)
    sys = solve_bochner(mesh, q)
    l1 = l1_norm(q, mesh)
    checks = {
        "energy_l1_bounds": energy_l1_bounds(sys.energy, l1),
        "energy_identity": energy_identity(sys, mesh),
        "jacobian_integral": jacobian_integral(sys, mesh),
        "chart_identity_gap": chart_identity_gap(sys, mesh),
        "min_laplacian_G": subharmonicity_check(sys, mesh, find_zeros(q, mesh), exclusion=cfg.zero_exclusion),
    }
    blob = system_to_json(sys, mesh, t=args.t, checks=checks)
    blob["differential"] = q.to_json()
    if args.maximal:
        ms = solve_maximal(mesh, q)
        blob["maximal"] = {
            "residual": ms.residual,
            "newton_iters": ms.iterations,
            "min_domination": maximal_domination_check(ms, mesh),
        }
    out = ensure_output_dir(cfg.out_dir)
    path = write_json(out / f"solve_t{args.t:g}.json", blob)
    print(f"t={args.t:g} | E={sys.energy:.9f} | |Phi|={l1:.9f} | iters={sys.iterations}")
    print("JSON:", path)
    return 0


def _cmd_spectrum(args: argparse.Namespace) -> int:
    cfg = _config(args)
    ctx = prepare_ray(cfg)
    mesh = ctx.surface.mesh
    q = ctx.q0.scaled(args.t)
    sys = solve_bochner(mesh, q)
    tags = args.metrics or list(SPECTRUM_TAGS)
    metrics = []
    for tag in tags:
        if tag == "maximal":
            metrics.append(make_metric("maximal", maximal=solve_maximal(mesh, q)))
        elif tag == "hyperbolic":
            metrics.append(make_metric("hyperbolic", mesh=mesh))
        elif tag == "flat":
            metrics.append(make_metric("flat", mesh=mesh, q=q))
        else:
            metrics.append(make_metric(tag, system=sys))
    report = compute_spectrum(
        metrics,
        ctx.curves,
        threads=cfg.threads,
        intersections=None if args.no_intersections else ctx.surface.group,
        segments=cfg.segments,
    )
    hashes = export_spectrum(report, cfg.out_dir)
    for row in report.rows:
        print(f"{row.metric_tag:<20} {row.curve_word:<6} {row.length:.9f}")
    print("FILES:", ", ".join(sorted(hashes)))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = run_ray_sweep(cfg)
    hashes = export_report(report, cfg.out_dir)
    checks = report.all_checks()
    failed = [c.name for c in checks if not c.passed]
    print(f"Points: {len(report.points)}/{len(cfg.t_grid)} | Checks: {len(checks)} | Failed: {len(failed)}")
    print("TXT:", Path(cfg.out_dir) / "report.txt")
    print("sweep.json sha256:", hashes["sweep.json"])
    if not report.complete:
        print("ABORTED:", report.error)
        return 3
    return 0 if report.passed else 1


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = run_acceptance_suite(cfg, only=args.only)
    if args.json:
        print(dumps(report.to_json()).decode("utf-8"), end="")
    else:
        print_verdict(report)
    if args.out:
        out = ensure_output_dir(cfg.out_dir)
        write_json(out / "acceptance.json", report.to_json())
    return 0 if report.passed else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=False, help="Path to an experiment config JSON (defaults are packaged)")
    p.add_argument("--out", required=False, help="Output directory (overrides out_dir)")
    p.add_argument("--threads", type=int, required=False, help="Worker threads; never changes results")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minlag")
    ap.add_argument("--version", action="version", version=f"minlag {APP_VERSION}")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sp = ap.add_subparsers(dest="cmd")

    p = sp.add_parser("build-surface", help="Build the group, mesh and series basis; write surface.json")
    _add_common(p)
    p.set_defaults(func=_cmd_build_surface)

    p = sp.add_parser("solve", help="Solve the harmonic map equation for t * Phi_0")
    _add_common(p)
    p.add_argument("--t", type=float, default=1.0, help="Ray parameter (default 1)")
    p.add_argument("--maximal", action="store_true", help="Also solve the maximal surface equation")
    p.set_defaults(func=_cmd_solve)

    p = sp.add_parser("spectrum", help="Length spectra of the configured curves at t * Phi_0")
    _add_common(p)
    p.add_argument("--t", type=float, default=1.0, help="Ray parameter (default 1)")
    p.add_argument("--metrics", nargs="+", choices=SPECTRUM_TAGS, help="Metric tags (default all)")
    p.add_argument("--no-intersections", action="store_true", help="Skip the intersection table")
    p.set_defaults(func=_cmd_spectrum)

    p = sp.add_parser("sweep", help="Ray sweep over t_grid; writes JSON, CSV and report.txt")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sp.add_parser("verify", help="Run the acceptance suite and print the verdict")
    _add_common(p)
    p.add_argument("--only", nargs="+", metavar="CID", help="Criterion ids to run, e.g. C01 C14")
    p.add_argument("--json", action="store_true", help="Print the verdict as JSON")
    p.set_defaults(func=_cmd_verify)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if not hasattr(args, "func"):
        ap.print_help()
        return 0
    try:
        return int(args.func(args))
    except ConfigError as exc:
        print("CONFIG ERROR:", exc)
        return 2
    except NumericalAbort as exc:
        print(f"NUMERICAL ABORT: {type(exc).__name__}: {exc}")
        return 3
    except IoFailure as exc:
        print("IO ERROR:", exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
