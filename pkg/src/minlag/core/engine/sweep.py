from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from minlag.core.constants import ENERGY_IDENTITY_NOTE, EULER_CHAR
from minlag.core.hyperbolic import FuchsianGroup, build_octagon_group, sigma
from minlag.core.mesh import EquivariantMesh, build_mesh, gauss_curvature
from minlag.core.metrics import CurveClass, curve_list, length_sandwich_check, make_metric, shorten
from minlag.core.qdiff import (
    QuadDifferential,
    SeriesBasis,
    build_series_basis,
    combine,
    find_zeros,
    flat_distance_to_zeros,
    flat_straight_path,
    l1_norm,
)
from minlag.core.solver import (
    HarmonicSystem,
    chart_identity_gap,
    energy_identity,
    energy_l1_bounds,
    jacobian_integral,
    minsky_bound_check,
    solve_bochner,
    system_to_json,
)
from minlag.errors import NumericalAbort
from minlag.settings import ExperimentConfig

logger = logging.getLogger(__name__)

ARC_LENGTH = 0.5


@dataclass(frozen=True)
class Check:
    name: str
    claim: str
    value: float
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return {"claim": self.claim, "value": self.value, "tolerance": self.tolerance, "passed": self.passed}


def upper_check(name: str, claim: str, value: float, tolerance: float) -> Check:
    """Passes when value <= tolerance."""
    return Check(name, claim, float(value), float(tolerance), bool(value <= tolerance))


@dataclass(frozen=True, eq=False)
class Surface:
    """Group, mesh and series basis shared by every solve of a run."""

    group: FuchsianGroup
    mesh: EquivariantMesh
    basis: SeriesBasis


def build_surface(config: ExperimentConfig) -> Surface:
    G = build_octagon_group()
    mesh = build_mesh(G, config.target_h)
    mesh.locator()
    basis = build_series_basis(G, config.word_length, tolerance=config.series_tolerance, cap=config.ball_cap)
    return Surface(G, mesh, basis)


def unit_differential(surface: Surface, coefficients: Sequence[complex]) -> QuadDifferential:
    """The combination of the basis rescaled to chart L1 norm 1."""
    raw = combine(surface.basis, coefficients)
    norm = l1_norm(raw, surface.mesh)
    if not norm > 0.0:
        raise NumericalAbort("basis combination has zero L1 norm")
    return raw.scaled(1.0 / norm)


@dataclass(frozen=True, eq=False)
class RayContext:
    surface: Surface
    q0: QuadDifferential
    zeros: Tuple
    far_mask: np.ndarray          # vertices at flat distance >= zero_exclusion from the zeros
    anchor: complex
    horizontal_arc: np.ndarray
    vertical_arc: np.ndarray
    curves: Tuple[CurveClass, ...]
    flat_lengths: Dict[str, float]
    flat_paths: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def prepare_ray(config: ExperimentConfig, surface: Optional[Surface] = None) -> RayContext:
    surface = surface or build_surface(config)
    mesh = surface.mesh
    q0 = unit_differential(surface, config.basis)
    zeros = tuple(find_zeros(q0, mesh))
    dist = flat_distance_to_zeros(q0, mesh.positions, zeros)
    far = dist >= config.zero_exclusion
    anchor = complex(mesh.positions[int(np.argmax(dist))])
    horizontal = flat_straight_path(q0, anchor, complex(ARC_LENGTH))
    vertical = flat_straight_path(q0, anchor, complex(0.0, ARC_LENGTH))
    curves = tuple(curve_list(surface.group, config.curves))
    flat = make_metric("flat", mesh=mesh, q=q0)
    shortened = {c.word: shorten(flat, c, segments=config.segments) for c in curves}
    flat_lengths = {w: r.length for w, r in shortened.items()}
    flat_paths = {w: r.path for w, r in shortened.items()}
    logger.info("ray: %d zeros, anchor=%s, %d of %d vertices outside the zero disks", len(zeros), anchor, int(far.sum()), far.size)
    return RayContext(surface, q0, zeros, far, anchor, horizontal, vertical, curves, flat_lengths, flat_paths)


@dataclass(frozen=True, eq=False)
class RayPoint:
    t: float
    system: HarmonicSystem = field(repr=False)
    energy: float
    l1_norm: float
    jacobian_integral: float
    margin_min: float             # min of e - 2|f|/sigma
    margin_max: float
    sup_distance: float           # D(t)
    energy_ratio_gap: float       # |E / 2t - 1|
    normalized_lengths: Dict[str, float]
    length_iterations: Dict[str, Tuple[int, float]]
    sandwich: object
    minsky: object
    horizontal_ratio: float
    vertical_ratio: float
    induced_curvature_max: float
    energy_identity_gap: float
    checks: Tuple[Check, ...]

    def to_json(self) -> dict:
        blob = system_to_json(self.system, self.system.mesh, t=self.t, checks={c.name: c.to_json() for c in self.checks})
        blob.update(
            {
                "jacobian_integral": self.jacobian_integral,
                "margin_min": self.margin_min,
                "margin_max": self.margin_max,
                "sup_distance": self.sup_distance,
                "energy_ratio_gap": self.energy_ratio_gap,
                "normalized_lengths": dict(self.normalized_lengths),
                "horizontal_ratio": self.horizontal_ratio,
                "vertical_ratio": self.vertical_ratio,
                "induced_curvature_max": self.induced_curvature_max,
                "energy_identity_gap": self.energy_identity_gap,
                "minsky": self.minsky.to_json(),
                "sandwich": [
                    {"word": r.word, "pullback_1": r.pullback_1, "pullback_2": r.pullback_2, "induced_full": r.induced_full, "ok": r.ok}
                    for r in self.sandwich.rows
                ],
            }
        )
        return blob


def arc_length(metric, path: np.ndarray) -> float:
    return float(metric.segment_lengths(path[:-1], path[1:]).sum())


def solve_ray_point(ctx: RayContext, config: ExperimentConfig, t: float) -> RayPoint:
    mesh = ctx.surface.mesh
    q = ctx.q0.scaled(t)
    sys = solve_bochner(mesh, q)
    E = sys.energy
    l1 = l1_norm(q, mesh)
    s = sigma(mesh.positions)
    f0 = ctx.q0.modulus(mesh.positions) / s
    margin = sys.e.values - 2.0 * np.sqrt(sys.P.values)
    D = float(np.max(np.abs(sys.e.values[ctx.far_mask] / E - f0[ctx.far_mask]))) if ctx.far_mask.any() else math.nan

    normalized = make_metric("induced_normalized", system=sys)
    lengths: Dict[str, float] = {}
    iters: Dict[str, Tuple[int, float]] = {}
    table: Dict[Tuple[str, str], float] = {}
    p1 = make_metric("pullback_1", system=sys)
    p2 = make_metric("pullback_2", system=sys)
    for c in ctx.curves:
        res = shorten(normalized, c, segments=config.segments)
        lengths[c.word] = res.length / math.sqrt(E)
        iters[c.word] = (res.iterations, res.grad_norm)
        # induced_full is the normalized metric scaled by 2
        table[("induced_full", c.word)] = math.sqrt(2.0) * res.length
        table[("pullback_1", c.word)] = shorten(p1, c, segments=config.segments).length
        table[("pullback_2", c.word)] = shorten(p2, c, segments=config.segments).length
    sandwich = length_sandwich_check(sys, ctx.curves, lengths=table, slack=config.tol("sandwich_slack"))
    minsky = minsky_bound_check(sys, q, mesh, zeros=ctx.zeros, slack=config.tol("minsky_slack"))

    horizontal = arc_length(p1, ctx.horizontal_arc) / (2.0 * math.sqrt(l1) * ARC_LENGTH)
    vertical = arc_length(p1, ctx.vertical_arc) / math.sqrt(E)
    K = gauss_curvature(mesh, make_metric("induced_full", system=sys)).values
    ident = energy_identity(sys, mesh)
    bounds = energy_l1_bounds(E, l1)
    J_int = jacobian_integral(sys, mesh)

    checks = (
        upper_check("energy_l1_bounds", "energy-l1-bounds", abs(2.0 * l1 - E) - 4.0 * math.pi, config.tol("energy_bounds")),
        upper_check("jacobian_integral", "jacobian-gauss-bonnet", abs(J_int + 2.0 * math.pi * EULER_CHAR), config.tol("jacobian_integral")),
        upper_check("chart_identity", "chart-energy-identity", chart_identity_gap(sys, mesh), config.tol("chart_identity")),
        upper_check("chart_domination", "chart-energy-domination", -float(margin.min()), config.tol("domination_slack")),
        upper_check("energy_identity", "energy-identity-corrected", ident["gap"], config.tol("energy_identity")),
        upper_check("sandwich", "length-sandwich", float(len(sandwich.violations)), 0.0),
        upper_check("minsky", "injectivity-radius-bound", float(len(minsky.violations)), 0.0),
        upper_check("induced_curvature_negative", "induced-curvature-negative", float(K.max()), 0.0),
        upper_check("energy_bound_deficit", "energy-l1-bounds", bounds["deficit"], config.tol("energy_bounds")),
    )
    point = RayPoint(
        t=float(t),
        system=sys,
        energy=E,
        l1_norm=l1,
        jacobian_integral=J_int,
        margin_min=float(margin.min()),
        margin_max=float(margin.max()),
        sup_distance=D,
        energy_ratio_gap=abs(E / (2.0 * t) - 1.0),
        normalized_lengths=lengths,
        length_iterations=iters,
        sandwich=sandwich,
        minsky=minsky,
        horizontal_ratio=horizontal,
        vertical_ratio=vertical,
        induced_curvature_max=float(K.max()),
        energy_identity_gap=ident["gap"],
        checks=checks,
    )
    logger.info(
        "t=%g: E=%.9f |Phi|=%.9f D=%.3e |E/2t-1|=%.3e horiz=%.4f vert=%.4f",
        t, E, l1, D, point.energy_ratio_gap, horizontal, vertical,
    )
    return point


@dataclass(frozen=True, eq=False)
class SweepReport:
    points: Tuple[RayPoint, ...]
    flat_lengths: Dict[str, float]
    checks: Tuple[Check, ...]
    complete: bool
    config: dict
    error: Optional[str] = None
    note: str = ENERGY_IDENTITY_NOTE

    @property
    def passed(self) -> bool:
        return self.complete and all(c.passed for c in self.all_checks())

    def all_checks(self) -> List[Check]:
        out = [c for p in self.points for c in p.checks]
        out.extend(self.checks)
        return out

    def length_rows(self) -> List[Tuple[float, str, float, float, float]]:
        rows = []
        for p in self.points:
            for word, v in p.normalized_lengths.items():
                flat = self.flat_lengths[word]
                rows.append((p.t, word, v, flat, abs(v - flat) / flat))
        return rows

    def to_json(self) -> dict:
        return {
            "complete": self.complete,
            "error": self.error,
            "config": self.config,
            "flat_lengths": dict(self.flat_lengths),
            "points": [p.to_json() for p in self.points],
            "checks": {c.name: c.to_json() for c in self.checks},
            "passed": self.passed,
            "note": self.note,
        }


def _non_increasing(values: Sequence[float]) -> float:
    """Largest one-step increase; <= slack means non-increasing."""
    steps = [b - a for a, b in zip(values, values[1:])]
    return max(steps, default=0.0)


def ray_checks(points: Sequence[RayPoint], flat_lengths: Dict[str, float], config: ExperimentConfig) -> Tuple[Check, ...]:
    if not points:
        return ()
    last = points[-1]
    slack = config.tol("monotone_slack")
    worst_len = max((abs(v - flat_lengths[w]) / flat_lengths[w] for w, v in last.normalized_lengths.items()), default=0.0)
    return (
        upper_check("ray_sup_monotone", "ray-density-limit", _non_increasing([p.sup_distance for p in points]), slack),
        upper_check("ray_sup_final", "ray-density-limit", last.sup_distance, config.tol("ray_sup")),
        upper_check("ray_lengths_final", "ray-length-limit", worst_len, config.tol("ray_lengths")),
        upper_check("energy_ratio_monotone", "energy-growth-rate", _non_increasing([p.energy_ratio_gap for p in points]), slack),
        upper_check("vertical_monotone", "vertical-stretch-decay", _non_increasing([p.vertical_ratio for p in points]), slack),
        upper_check("horizontal_stretch_final", "horizontal-stretch", abs(last.horizontal_ratio - 1.0), config.tol("stretch")),
        upper_check("vertical_stretch_final", "vertical-stretch-decay", last.vertical_ratio, config.tol("stretch")),
    )


def run_ray_sweep(config: ExperimentConfig, *, context: Optional[RayContext] = None, threads: Optional[int] = None) -> SweepReport:
    """Solve along t * Phi_0 for every t of the grid and collect the limit diagnostics.

    Results are assembled in grid order; a numerical failure truncates the
    report at the first failing t and marks it incomplete.
    """
    n_threads = max(1, int(threads if threads is not None else config.threads))
    ctx = context or prepare_ray(config)
    grid = list(config.t_grid)

    def run(t: float):
        try:
            return solve_ray_point(ctx, config, t)
        except NumericalAbort as exc:
            logger.error("t=%g aborted: %s", t, exc)
            return exc

    if n_threads == 1:
        results = [run(t) for t in grid]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, grid))

    points: List[RayPoint] = []
    error = None
    for t, res in zip(grid, results):
        if isinstance(res, NumericalAbort):
            error = f"t={t:g}: {type(res).__name__}: {res}"
            break
        points.append(res)
    complete = error is None
    checks = ray_checks(points, ctx.flat_lengths, config) if complete else ()
    # thread count and output location never reach the emitted bytes
    cfg = {k: v for k, v in config.to_json().items() if k not in ("threads", "out_dir")}
    return SweepReport(tuple(points), dict(ctx.flat_lengths), checks, complete, cfg, error)
