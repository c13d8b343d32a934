from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from minlag.core.constants import ALPHABET, II_DENOM_FLOOR
from minlag.core.hyperbolic import (
    DiskPoint,
    FuchsianGroup,
    MobiusIsometry,
    axis_point,
    group_ball,
    sigma,
)
from minlag.core.mesh import EquivariantMesh
from minlag.core.metrics import CurveClass, MetricOnSurface, shorten
from minlag.core.qdiff import (
    QuadDifferential,
    flat_straight_path,
    foliation_measure,
    gauss_rule,
    zeta_increment,
)
from minlag.core.solver import HarmonicSystem
from minlag.errors import BudgetExceeded, NearZeroDenominator

logger = logging.getLogger(__name__)

_TILE_STEP = 0.02
_KEY_TOL = 1e-6


# --- intersection numbers -------------------------------------------------


def _tile_elements(G: FuchsianGroup, T: MobiusIsometry) -> List[MobiusIsometry]:
    """Elements g with g(x) in the octagon for x along one period of the axis of T."""
    ell = 2.0 * math.acosh(abs(T.trace) / 2.0)
    c = axis_point(T)
    to_c = MobiusIsometry.from_disk(1.0 + 0j, c)
    _, att = T.fixed_points()
    u = complex(to_c.inverse().apply(att))
    u /= abs(u)
    n = max(8, int(math.ceil(ell / _TILE_STEP)))
    s = ell * np.arange(n + 1) / n
    pts = to_c.apply(np.tanh(0.5 * s) * u)
    gens = [G.generators[ch] for ch in ALPHABET]
    out: List[MobiusIsometry] = []
    seen = set()
    for z in pts:
        g = MobiusIsometry.identity()
        w = complex(z)
        for _ in range(200):
            imgs = [complex(h.apply(w)) for h in gens]
            k = min(range(len(gens)), key=lambda i: abs(imgs[i]))
            if abs(imgs[k]) >= abs(w) - 1e-13:
                break
            g = gens[k].compose(g)
            w = imgs[k]
        key = tuple(round(v, 6) for v in _sign_fixed(g))
        if key not in seen:
            seen.add(key)
            out.append(g)
    return out


def _sign_fixed(m: MobiusIsometry) -> Tuple[float, float, float, float]:
    e = m.entries()
    lead = next((v for v in e if abs(v) > 1e-9), 1.0)
    return tuple(v if lead > 0 else -v for v in e)


def _half_plane_coordinate(z: np.ndarray, T: MobiusIsometry) -> np.ndarray:
    """Chart of the disk onto the upper half-plane sending the axis of T to the positive imaginary axis."""
    rep, att = T.fixed_points()
    c = axis_point(T)
    ref = (c - rep) / (c - att)
    return (z - rep) / (z - att) * 1j * np.conj(ref) / abs(ref)


def intersection_number(G: FuchsianGroup, g1: CurveClass, g2: CurveClass, *, cap: int = 200_000) -> int:
    """Transverse crossings of the closed geodesics of g1 and g2.

    Powers reduce to their primitive roots first. Lifts of g2 crossing one
    period of the g1 axis are generated from the tiles both axes pass through,
    then counted modulo the g1 translation.
    """
    r1, k1 = g1.primitive(G)
    r2, k2 = g2.primitive(G)
    if k1 * k2 > 1:
        # lifts of a power coincide with those of its root; the count is bilinear
        return k1 * k2 * intersection_number(G, r1, r2, cap=cap)
    T1, T2 = g1.deck.matrix, g2.deck.matrix
    ell1 = 2.0 * math.acosh(abs(T1.trace) / 2.0)
    tiles1 = _tile_elements(G, T1)
    tiles2 = _tile_elements(G, T2)
    near = [g.matrix for g in group_ball(G, 2)]
    count = len(tiles1) * len(tiles2) * len(near)
    if count > cap:
        raise BudgetExceeded(f"{count} lift candidates exceed cap {cap}")
    rep2, att2 = T2.fixed_points()
    ends = []
    for g in tiles1:
        gi = g.inverse()
        for s in near:
            left = gi.compose(s)
            for k in tiles2:
                h = left.compose(k)
                ends.append((complex(h.apply(rep2)), complex(h.apply(att2))))
    ends_arr = np.array(ends, dtype=complex)
    x = _half_plane_coordinate(ends_arr[:, 0], T1).real
    y = _half_plane_coordinate(ends_arr[:, 1], T1).real
    ok = np.isfinite(x) & np.isfinite(y) & (np.abs(x) > 1e-9) & (np.abs(y) > 1e-9) & (np.abs(x) < 1e9) & (np.abs(y) < 1e9)
    cross = ok & (x * y < 0.0)
    if not cross.any():
        return 0
    x, y = x[cross], y[cross]
    height = np.sqrt(-x * y)
    s = np.mod(np.log(height), ell1)
    s[ell1 - s < _KEY_TOL] = 0.0
    slope = (x + y) / (2.0 * height)
    order = np.lexsort((slope, s))
    keys: List[Tuple[float, float]] = []
    for i in order:
        cand = (float(s[i]), float(slope[i]))
        if any(_same_crossing(cand, k, ell1) for k in keys):
            continue
        keys.append(cand)
    logger.debug("intersection %s/%s: %d candidates, %d crossings", g1.word, g2.word, count, len(keys))
    return len(keys)


def _same_crossing(a: Tuple[float, float], b: Tuple[float, float], period: float) -> bool:
    ds = abs(a[0] - b[0])
    ds = min(ds, period - ds)
    return ds < _KEY_TOL and abs(a[1] - b[1]) < _KEY_TOL * max(1.0, abs(a[1]))


def intersection_table(G: FuchsianGroup, curves: Sequence[CurveClass]) -> List[Tuple[str, str, int]]:
    rows = []
    for i, a in enumerate(curves):
        for b in curves[i:]:
            rows.append((a.word, b.word, intersection_number(G, a, b)))
    return rows


# --- flat lengths -------------------------------------------------------


def dlr_length(q: QuadDifferential, path: Sequence[complex], n_quadrature: int = 64) -> float:
    """Half the integral over theta in [0, pi] of the transverse measures along path."""
    x, w = gauss_rule(n_quadrature)
    total = 0.0
    for th, wt in zip(math.pi * x, math.pi * w):
        total += wt * foliation_measure(q, path, float(th)).value
    return 0.5 * total


def core_distance(q: QuadDifferential, p1: DiskPoint, p2: DiskPoint, *, steps: int = 256) -> float:
    """sqrt(h^2 + v^2) from the horizontal and vertical measures along the flat segment p1 -> p2."""
    a, b = p1.z, p2.z
    if a == b:
        return 0.0
    dz = zeta_increment(q, a, b)
    path = flat_straight_path(q, a, dz, steps=steps)
    h = foliation_measure(q, path, 0.0).value
    v = foliation_measure(q, path, 0.5 * math.pi).value
    return math.hypot(h, v)


def flat_distance(q: QuadDifferential, p1: DiskPoint, p2: DiskPoint) -> float:
    """|delta zeta| for points joined by a zero-free flat segment."""
    if p1.z == p2.z:
        return 0.0
    return abs(zeta_increment(q, p1.z, p2.z))


# --- second fundamental form -------------------------------------------


@dataclass(frozen=True)
class SecondFundamentalForm:
    """II(E_i, E_j) as coefficients along (J E_1, J E_2)."""

    II11: Tuple[float, float]
    II12: Tuple[float, float]
    II22: Tuple[float, float]

    @property
    def components(self) -> Tuple[float, ...]:
        return self.II11 + self.II12 + self.II22

    @property
    def trace(self) -> Tuple[float, float]:
        return (self.II11[0] + self.II22[0], self.II11[1] + self.II22[1])


def second_fundamental_form_from_jet(S: float, Sx: float, Sy: float, f: complex, fp: complex) -> SecondFundamentalForm:
    """Closed-form components from S = sigma*e, its gradient, f and f'."""
    X, Y = f.real, f.imag
    Xx, Yx = fp.real, fp.imag
    Xy = -Yx
    root = 2.0 * S * (S * S - 4.0 * (X * X + Y * Y))
    if root <= II_DENOM_FLOOR:
        raise NearZeroDenominator(f"denominator term {root:.3e} at or below {II_DENOM_FLOOR}")
    D = S * math.sqrt(root)
    a = (-X * Sy - S * Yx + Y * Sx) / D
    b = (Y * Sy - S * Xx + X * Sx) / D
    c = (-S * Xy + X * Sy - Y * Sx) / D
    d1 = (X * Sy + S * Yx - Y * Sx) / D
    d2 = (-Y * Sy + S * Xx - X * Sx) / D
    form = SecondFundamentalForm((a, b), (b, c), (d1, d2))
    tr = form.trace
    scale = max(1.0, abs(a), abs(b), abs(d1), abs(d2))
    if abs(tr[0]) > 1e-12 * scale or abs(tr[1]) > 1e-12 * scale:
        raise AssertionError(f"second fundamental form not trace free: {tr}")
    return form


def _two_ring(mesh: EquivariantMesh, node: int) -> np.ndarray:
    tris = mesh.triangles
    ring = {node}
    for _ in range(2):
        hit = np.any(np.isin(tris, list(ring)), axis=1)
        ring |= set(np.unique(tris[hit]).tolist())
    return np.array(sorted(ring), dtype=int)


def _nearest_node(mesh: EquivariantMesh, z: complex) -> int:
    return int(np.argmin(np.abs(mesh.nodes - z)))


def second_fundamental_form(sys: HarmonicSystem, point, mesh: Optional[EquivariantMesh] = None) -> SecondFundamentalForm:
    """Components at the mesh node nearest `point` (a node index or a chart point).

    The gradient of sigma*e comes from a quadratic least-squares fit over the
    two-ring; f' is exact.
    """
    mesh = mesh or sys.mesh
    if isinstance(point, (int, np.integer)):
        node = int(point)
    else:
        z = point.z if isinstance(point, DiskPoint) else complex(point)
        node = _nearest_node(mesh, z)
    ring = _two_ring(mesh, node)
    z0 = mesh.nodes[node]
    zr = mesh.nodes[ring]
    S = sigma(zr) * sys.e.values[mesh.canon[ring]]
    dx, dy = (zr - z0).real, (zr - z0).imag
    V = np.column_stack([np.ones_like(dx), dx, dy, dx * dx, dx * dy, dy * dy])
    coef, *_ = np.linalg.lstsq(V, S, rcond=None)
    S0 = float(sigma(z0) * sys.e.values[mesh.canon[node]])
    q = sys.q
    if q.is_zero:
        f, fp = 0j, 0j
    else:
        f = complex(q.raw(np.array([z0]))[0])
        fp = complex(q.scale * np.exp(1j * q.phase) * q._core_derivative(np.array([z0]))[0])
    return second_fundamental_form_from_jet(S0, float(coef[1]), float(coef[2]), f, fp)


# --- spectrum tables ------------------------------------------------------


@dataclass(frozen=True)
class SpectrumRow:
    metric_tag: str
    curve_word: str
    length: float
    iterations: int
    grad_norm: float


@dataclass(frozen=True)
class SpectrumReport:
    rows: Tuple[SpectrumRow, ...]
    intersections: Tuple[Tuple[str, str, int], ...] = ()

    def length(self, tag: str, word: str) -> float:
        for r in self.rows:
            if r.metric_tag == tag and r.curve_word == word:
                return r.length
        raise KeyError((tag, word))

    def lengths(self) -> Dict[Tuple[str, str], float]:
        return {(r.metric_tag, r.curve_word): r.length for r in self.rows}


def compute_spectrum(
    metrics: Sequence[MetricOnSurface],
    curves: Sequence[CurveClass],
    *,
    threads: int = 1,
    intersections: Optional[FuchsianGroup] = None,
    **params,
) -> SpectrumReport:
    """Lengths for every (metric, curve) pair; rows in metric-major, curve-minor order."""
    jobs = [(m, c) for m in metrics for c in curves]

    def run(job):
        m, c = job
        res = shorten(m, c, **params)
        return SpectrumRow(m.tag, c.word, res.length, res.iterations, res.grad_norm)

    if threads <= 1:
        rows = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, jobs))
    table = tuple(intersection_table(intersections, curves)) if intersections is not None else ()
    return SpectrumReport(tuple(rows), table)

