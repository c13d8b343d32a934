from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from minlag.core.constants import ENERGY_IDENTITY_NOTE, SURFACE_AREA
from minlag.core.engine.sweep import RayContext, SweepReport, build_surface, prepare_ray, run_ray_sweep, unit_differential
from minlag.core.export.report_render import export_report
from minlag.core.hyperbolic import DiskPoint
from minlag.core.mesh import gauss_curvature
from minlag.core.metrics import make_metric, maximal_curvature_gap, shorten
from minlag.core.qdiff import combine, find_zeros, flat_distance_to_zeros
from minlag.core.solver import HarmonicSystem, maximal_domination_check, solve_bochner, solve_maximal
from minlag.core.spectrum import core_distance, dlr_length, flat_distance, second_fundamental_form
from minlag.errors import MinlagError
from minlag.settings import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CriterionResult:
    cid: str
    title: str
    claim: str
    passed: bool
    detail: Dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"title": self.title, "claim": self.claim, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class AcceptanceReport:
    results: Tuple[CriterionResult, ...]
    note: str = ENERGY_IDENTITY_NOTE

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failed(self) -> List[str]:
        return [r.cid for r in self.results if not r.passed]

    def to_json(self) -> dict:
        return {
            "criteria": {r.cid: r.to_json() for r in self.results},
            "overall": "PASS" if self.passed else "FAIL",
            "note": self.note,
        }


class AcceptanceContext:
    """Lazily built shared state; each criterion pulls only what it needs."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config

    @cached_property
    def surface(self):
        return build_surface(self.config)

    @cached_property
    def ray(self) -> RayContext:
        return prepare_ray(self.config, self.surface)

    @cached_property
    def sweep(self) -> SweepReport:
        report = run_ray_sweep(self.config, context=self.ray)
        if not report.complete:
            raise MinlagError(f"sweep incomplete: {report.error}")
        return report

    @cached_property
    def trivial(self) -> HarmonicSystem:
        zero = combine(self.surface.basis, (0j,) * len(self.surface.basis.exponents))
        return solve_bochner(self.surface.mesh, zero)

    def tol(self, name: str) -> float:
        return self.config.tol(name)


def _c01(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    hyp = make_metric("hyperbolic", mesh=ctx.surface.mesh)
    worst, rows = 0.0, {}
    for c in ctx.ray.curves:
        exact = c.hyperbolic_length
        got = shorten(hyp, c, segments=ctx.config.segments).length
        rel = abs(got - exact) / exact
        rows[c.word] = {"length": got, "trace_length": exact, "relative": rel}
        worst = max(worst, rel)
    return worst <= ctx.tol("geometry_length"), {"worst_relative": worst, "curves": rows}


def _c02(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    area = float(ctx.surface.mesh.vertex_area.sum())
    j = [p.jacobian_integral for p in ctx.sweep.points]
    ok_area = abs(area - SURFACE_AREA) <= ctx.tol("area")
    ok_j = all(abs(v - SURFACE_AREA) <= ctx.tol("jacobian_integral") for v in j)
    return ok_area and ok_j, {"area": area, "jacobian_integrals": j}


def _c03(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    sys = ctx.trivial
    mesh = ctx.surface.mesh
    w_sup = float(np.max(np.abs(sys.w.values)))
    induced = make_metric("induced_full", system=sys)
    ratio_gap = float(np.max(np.abs(induced.ratio(mesh).values - 2.0)))
    # induced_full = 2 sigma has curvature -1/2
    K_ind = gauss_curvature(mesh, induced).values
    K_pb = gauss_curvature(mesh, make_metric("pullback_1", system=sys)).values
    curv = max(float(np.max(np.abs(2.0 * K_ind + 1.0))), float(np.max(np.abs(K_pb + 1.0))))
    nodes = mesh.representatives[:: max(1, mesh.n_vertices // 25)]
    ii = max(max(abs(v) for v in second_fundamental_form(sys, int(n)).components) for n in nodes)
    ok = (
        w_sup <= ctx.tol("trivial_w")
        and abs(sys.energy - SURFACE_AREA) <= ctx.tol("area")
        and ratio_gap <= 1e-12
        and curv <= ctx.tol("curvature")
        and ii == 0.0
    )
    return ok, {"w_sup": w_sup, "energy": sys.energy, "ratio_gap": ratio_gap, "curvature_gap": curv, "II_max": ii}


def _c04(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    mesh = ctx.surface.mesh
    gaps = {}
    for p in ctx.sweep.points:
        for tag in ("pullback_1", "pullback_2"):
            K = gauss_curvature(mesh, make_metric(tag, system=p.system)).values
            gaps[f"{tag}@t={p.t:g}"] = float(np.max(np.abs(K + 1.0)))
    worst = max(gaps.values(), default=0.0)
    return worst <= ctx.tol("curvature"), {"worst": worst, "gaps": gaps}


def _point_checks(ctx: AcceptanceContext, names: Iterable[str]) -> Tuple[bool, Dict]:
    names = tuple(names)
    detail = {}
    ok = True
    for p in ctx.sweep.points:
        for c in p.checks:
            if c.name in names:
                detail[f"{c.name}@t={p.t:g}"] = c.value
                ok = ok and c.passed
    return ok, detail


def _sweep_checks(ctx: AcceptanceContext, names: Iterable[str]) -> Tuple[bool, Dict]:
    names = tuple(names)
    picked = [c for c in ctx.sweep.checks if c.name in names]
    return bool(picked) and all(c.passed for c in picked), {c.name: c.value for c in picked}


def _c05(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    return _point_checks(ctx, ("chart_identity", "chart_domination"))


def _c06(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    return _point_checks(ctx, ("energy_l1_bounds",))


def _c07(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    return _sweep_checks(ctx, ("ray_sup_monotone", "ray_sup_final", "ray_lengths_final"))


def _c08(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    return _point_checks(ctx, ("sandwich",))


def _c09(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    return _sweep_checks(ctx, ("horizontal_stretch_final", "vertical_stretch_final"))


def _c10(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    return _point_checks(ctx, ("minsky",))


def _c11(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    q0 = ctx.ray.q0
    rows, worst = {}, 0.0
    for word, path in ctx.ray.flat_paths.items():
        flat = ctx.ray.flat_lengths[word]
        dlr = dlr_length(q0, path, ctx.config.quadrature_n)
        rel = abs(dlr - flat) / flat
        rows[word] = {"dlr": dlr, "flat": flat}
        worst = max(worst, rel)
    return worst <= ctx.tol("dlr"), {"worst_relative": worst, "curves": rows}


def _c12(ctx: AcceptanceContext, pairs: int = 50) -> Tuple[bool, Dict]:
    mesh = ctx.surface.mesh
    q0 = ctx.ray.q0
    rng = np.random.default_rng(ctx.config.seed)
    far = np.nonzero(ctx.ray.far_mask)[0]
    worst, used, attempts = 0.0, 0, 0
    while used < pairs and attempts < 20 * pairs and far.size:
        attempts += 1
        z1 = complex(mesh.positions[far[rng.integers(far.size)]])
        step = 0.1 * 0.5 * (1.0 - abs(z1) ** 2)
        z2 = z1 + step * np.exp(2j * np.pi * rng.random())
        if abs(z2) >= 0.99:
            continue
        d2 = flat_distance_to_zeros(q0, np.array([z2]), ctx.ray.zeros)[0]
        if d2 < 0.5 * ctx.config.zero_exclusion:
            continue
        p1, p2 = DiskPoint.from_complex(z1), DiskPoint.from_complex(z2)
        gap = abs(core_distance(q0, p1, p2) - flat_distance(q0, p1, p2))
        worst = max(worst, gap)
        used += 1
    return used == pairs and worst <= ctx.tol("core_distance"), {"pairs": used, "worst": worst}


def _c13(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    mesh = ctx.surface.mesh
    point = ctx.sweep.points[min(1, len(ctx.sweep.points) - 1)]
    ms = solve_maximal(mesh, point.system.q)
    u_gap = float(np.max(np.abs(ms.u.values - 0.5 * point.system.w.values)))
    curv = maximal_curvature_gap(ms, point.system)
    ident = max(p.energy_identity_gap for p in ctx.sweep.points)
    dom = maximal_domination_check(ms, mesh)
    noted = ENERGY_IDENTITY_NOTE in ctx.sweep.note
    ok = (
        u_gap <= ctx.tol("maximal_u")
        and curv <= ctx.tol("maximal_curvature")
        and ident <= ctx.tol("energy_identity")
        and dom >= 1.0 - 1e-9
        and noted
    )
    detail = {"t": point.t, "u_gap": u_gap, "curvature_gap": curv, "energy_identity_gap": ident, "min_domination": dom, "note": noted}
    return ok, detail


def _c14(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    mesh = ctx.surface.mesh
    t = ctx.config.t_grid[0] if ctx.config.t_grid else 1.0
    q = ctx.ray.q0.scaled(t)
    a = solve_bochner(mesh, q).w.values
    b = solve_bochner(mesh, q.rotated(0.7)).w.values
    return bool(np.array_equal(a, b)), {"t": t, "max_difference": float(np.max(np.abs(a - b)))}


def _c15(ctx: AcceptanceContext, random_count: int = 5) -> Tuple[bool, Dict]:
    surface = ctx.surface
    n = len(surface.basis.exponents)
    rng = np.random.default_rng(ctx.config.seed + 1)
    combos = [tuple(1.0 + 0j if k == j else 0j for k in range(n)) for j in range(n)]
    for _ in range(random_count):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        combos.append(tuple(complex(c) for c in v))
    totals = []
    for coeffs in combos:
        q = unit_differential(surface, coeffs)
        try:
            totals.append(sum(m for _, m in find_zeros(q, surface.mesh)))
        except MinlagError as exc:
            logger.warning("zero count failed for %s: %s", coeffs, exc)
            totals.append(-1)
    return all(t == 4 for t in totals), {"totals": totals}


def _c16(ctx: AcceptanceContext) -> Tuple[bool, Dict]:
    other = 1 if ctx.config.threads > 1 else 2
    hashes = []
    for threads in (ctx.config.threads, other):
        report = run_ray_sweep(ctx.config, context=ctx.ray, threads=threads) if threads != ctx.config.threads else ctx.sweep
        with tempfile.TemporaryDirectory() as tmp:
            hashes.append(export_report(report, tmp))
    return hashes[0] == hashes[1], {"threads": [ctx.config.threads, other], "files": sorted(hashes[0])}


CRITERIA: Tuple[Tuple[str, str, str, Callable[[AcceptanceContext], Tuple[bool, Dict]]], ...] = (
    ("C01", "geometry oracle", "trace-length-formula", _c01),
    ("C02", "gauss-bonnet", "area-and-jacobian-integral", _c02),
    ("C03", "trivial solve", "totally-geodesic-diagonal", _c03),
    ("C04", "hyperbolic pullbacks", "pullback-curvature", _c04),
    ("C05", "chart energy identity", "chart-energy-identity", _c05),
    ("C06", "energy bounds", "energy-l1-bounds", _c06),
    ("C07", "ray limit", "ray-density-and-length-limit", _c07),
    ("C08", "length sandwich", "length-sandwich", _c08),
    ("C09", "stretch estimates", "foliation-stretch", _c09),
    ("C10", "injectivity radius bound", "injectivity-radius-bound", _c10),
    ("C11", "flat current length", "flat-current-length", _c11),
    ("C12", "core distance", "core-of-trees-distance", _c12),
    ("C13", "maximal surface", "maximal-surface-equivalence", _c13),
    ("C14", "phase invariance", "phase-invariance", _c14),
    ("C15", "zero count", "zero-count", _c15),
    ("C16", "determinism", "determinism", _c16),
)


def run_acceptance_suite(config: ExperimentConfig, *, only: Optional[Iterable[str]] = None) -> AcceptanceReport:
    """Run the criteria in fixed order; a criterion that raises is recorded as failed."""
    wanted = set(only) if only is not None else None
    ctx = AcceptanceContext(config)
    results: List[CriterionResult] = []
    for cid, title, claim, fn in CRITERIA:
        if wanted is not None and cid not in wanted:
            continue
        try:
            passed, detail = fn(ctx)
        except Exception as exc:  # noqa: BLE001
            logger.debug("%s raised", cid, exc_info=True)
            passed, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
        logger.info("%s %s: %s", cid, title, "PASS" if passed else "FAIL")
        results.append(CriterionResult(cid, title, claim, bool(passed), detail))
    return AcceptanceReport(tuple(results))


def print_verdict(report: AcceptanceReport) -> None:
    for r in report.results:
        print(f"{r.cid} {r.title}: {'PASS' if r.passed else 'FAIL'}")
    print(f"\nACCEPTANCE: {'PASS' if report.passed else 'FAIL'}")
