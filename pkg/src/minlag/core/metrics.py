from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import coo_matrix, csr_matrix, identity
from scipy.sparse.linalg import spsolve

from minlag.core.constants import DET_FLOOR, GAUSS_POINTS
from minlag.core.hyperbolic import (
    FuchsianGroup,
    GroupElement,
    MobiusIsometry,
    axis_point,
    cyclically_reduce,
    reduce_to_domain,
    sigma,
    translation_length,
    word_root,
)
from minlag.core.mesh import EquivariantMesh, ScalarField, gauss_curvature
from minlag.core.qdiff import QuadDifferential, gauss_rule
from minlag.core.solver import HarmonicSystem, MaximalSystem
from minlag.errors import DegenerateMetric, ShorteningStalled

logger = logging.getLogger(__name__)

_POLISH_ROUNDS = 25

METRIC_TAGS = (
    "hyperbolic",
    "induced_full",
    "induced_normalized",
    "pullback_1",
    "pullback_2",
    "flat",
    "maximal",
    "conformal",
)


@dataclass(frozen=True, eq=False)
class MetricOnSurface:
    """A metric on the surface, evaluated in the disk chart.

    Conformal metrics store the invariant ratio rho = lambda / sigma per canonical
    vertex. Full metrics (the pullbacks) store the energy density e and take f
    from the differential. Flat metrics are |f| |dz|^2.
    """

    kind: str                          # "conformal" | "full" | "flat"
    tag: str
    mesh: Optional[EquivariantMesh]
    rho: Optional[np.ndarray] = None   # conformal ratio, or e for full metrics
    q: Optional[QuadDifferential] = None
    sign: int = 0
    scale: float = 1.0

    def scaled(self, c: float) -> "MetricOnSurface":
        if c <= 0.0:
            raise ValueError("metric scale must be positive")
        return replace(self, scale=self.scale * float(c))

    def _invariant(self, w: np.ndarray) -> np.ndarray:
        if self.rho is None:
            return np.ones(w.size)
        return self.mesh.interpolate(self.rho, w)

    def tensor_at(self, z) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Chart entries (E, F, G) at points z of the disk."""
        z = np.asarray(z, dtype=complex).ravel()
        if self.kind == "flat":
            m = self.scale * self.q.modulus(z)
            return m, np.zeros_like(m), m
        s = sigma(z)
        if self.kind == "conformal" and self.rho is None:
            lam = self.scale * s
            return lam, np.zeros_like(lam), lam
        w, dw = reduce_to_domain(_group_of(self), z)
        base = self._invariant(w) * s
        if self.kind == "conformal":
            lam = self.scale * base
            return lam, np.zeros_like(lam), lam
        f = self.q.raw(w) * dw ** 2 if not self.q.is_zero else np.zeros(z.size, dtype=complex)
        c = self.scale
        E = c * (base + 2.0 * self.sign * f.real)
        F = c * (-2.0 * self.sign * f.imag)
        G = c * (base - 2.0 * self.sign * f.real)
        return E, F, G

    def node_tensor(self, mesh: EquivariantMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(E, F, G) at every mesh node, boundary copies included."""
        z = mesh.nodes
        if self.kind == "flat":
            m = self.scale * self.q.modulus(z)
            return m, np.zeros_like(m), m
        s = sigma(z)
        inv = np.ones(z.size) if self.rho is None else self.rho[mesh.canon]
        base = inv * s
        if self.kind == "conformal":
            lam = self.scale * base
            return lam, np.zeros_like(lam), lam
        f = self.q.values(z)
        c = self.scale
        return (
            c * (base + 2.0 * self.sign * f.real),
            c * (-2.0 * self.sign * f.imag),
            c * (base - 2.0 * self.sign * f.real),
        )

    def ratio(self, mesh: EquivariantMesh) -> ScalarField:
        if self.kind == "conformal":
            rho = np.ones(mesh.n_vertices) if self.rho is None else self.rho
            return ScalarField(self.scale * rho)
        if self.kind == "flat":
            pos = mesh.positions
            return ScalarField(self.scale * self.q.modulus(pos) / sigma(pos))
        raise TypeError(f"{self.tag} is not conformal")

    @property
    def smooth(self) -> bool:
        """Lengths are smooth in the path: no mesh interpolation and no cone points."""
        return self.kind == "conformal" and self.rho is None

    @property
    def factor(self) -> ScalarField:
        """Conformal factor w.r.t. |dz|^2 at the canonical representatives."""
        pos = self.mesh.positions
        return ScalarField(self.ratio(self.mesh).values * sigma(pos))

    def area(self, mesh: EquivariantMesh) -> float:
        pos = mesh.positions
        E, F, G = self.tensor_at(pos)
        det = np.maximum(E * G - F * F, 0.0)
        return float(np.dot(np.sqrt(det) / sigma(pos), mesh.vertex_area))

    def segment_lengths(self, a: np.ndarray, b: np.ndarray, n_gauss: int = GAUSS_POINTS) -> np.ndarray:
        """Length of each chart-straight segment a[k] -> b[k]."""
        x, wt = gauss_rule(n_gauss)
        d = b - a
        pts = a[:, None] + d[:, None] * x[None, :]
        E, F, G = (v.reshape(pts.shape) for v in self.tensor_at(pts.ravel()))
        dx, dy = d.real[:, None], d.imag[:, None]
        ds2 = E * dx * dx + 2.0 * F * dx * dy + G * dy * dy
        return np.sqrt(np.maximum(ds2, 0.0)) @ wt


def _group_of(metric: MetricOnSurface) -> FuchsianGroup:
    if metric.q is not None:
        return metric.q.group
    return metric.mesh.group


def _check_positive(tag: str, E: np.ndarray, F: np.ndarray, G: np.ndarray) -> None:
    det = E * G - F * F
    if np.any(E <= 0.0) or np.any(det <= DET_FLOOR):
        raise DegenerateMetric(f"{tag}: not positive definite, min det {float(det.min()):.3e}")


def pullback_sum_gap(system: HarmonicSystem) -> float:
    """Entrywise gap between induced_full and pullback_1 + pullback_2 at the nodes."""
    mesh = system.mesh
    full = make_metric("induced_full", system=system, check=False).node_tensor(mesh)
    p1 = make_metric("pullback_1", system=system, check=False).node_tensor(mesh)
    p2 = make_metric("pullback_2", system=system, check=False).node_tensor(mesh)
    gaps = [np.max(np.abs(f - (x + y)) / np.maximum(np.abs(f), 1.0)) for f, x, y in zip(full, p1, p2)]
    return float(max(gaps))


def make_metric(
    tag: str,
    *,
    mesh: Optional[EquivariantMesh] = None,
    system: Optional[HarmonicSystem] = None,
    maximal: Optional[MaximalSystem] = None,
    q: Optional[QuadDifferential] = None,
    factor: Optional[ScalarField] = None,
    check: bool = True,
) -> MetricOnSurface:
    if tag not in METRIC_TAGS:
        raise ValueError(f"unknown metric tag {tag!r}")
    if system is not None:
        mesh = system.mesh
        q = system.q
    elif maximal is not None:
        mesh = maximal.mesh
        q = maximal.q

    if tag == "hyperbolic":
        metric = MetricOnSurface("conformal", tag, mesh)
    elif tag == "conformal":
        if factor is None or mesh is None:
            raise ValueError("a conformal metric needs a mesh and a factor")
        rho = factor.values / sigma(mesh.positions)
        metric = MetricOnSurface("conformal", tag, mesh, rho=rho)
    elif tag == "flat":
        if q is None or q.is_zero:
            raise DegenerateMetric("flat metric of the zero differential")
        metric = MetricOnSurface("flat", tag, mesh, q=q)
    elif tag == "maximal":
        if maximal is None:
            raise ValueError("maximal metric needs a solved maximal system")
        metric = MetricOnSurface("conformal", tag, mesh, rho=maximal.H.values)
    else:
        if system is None:
            raise ValueError(f"{tag} needs a solved harmonic system")
        e = system.e.values
        if tag == "induced_full":
            metric = MetricOnSurface("conformal", tag, mesh, rho=2.0 * e)
        elif tag == "induced_normalized":
            metric = MetricOnSurface("conformal", tag, mesh, rho=e)
        else:
            sign = 1 if tag == "pullback_1" else -1
            metric = MetricOnSurface("full", tag, mesh, rho=e, q=q, sign=sign)

    if check and metric.mesh is not None:
        if metric.kind == "conformal":
            r = metric.ratio(metric.mesh).values
            if np.any(r <= 0.0):
                raise DegenerateMetric(f"{tag}: conformal ratio min {float(r.min()):.3e}")
        elif metric.kind == "full":
            _check_positive(tag, *metric.node_tensor(metric.mesh))
        if tag == "induced_full":
            gap = pullback_sum_gap(system)
            if gap > 1e-12:
                raise AssertionError(f"induced_full differs from the pullback sum by {gap:.3e}")
    return metric


def maximal_curvature_gap(maximal: MaximalSystem, system: HarmonicSystem) -> float:
    """sup |K(H sigma) + J / H| over the vertices."""
    K = gauss_curvature(maximal.mesh, make_metric("maximal", maximal=maximal)).values
    target = -system.J.values / system.H.values
    return float(np.max(np.abs(K - target)))


@dataclass(frozen=True)
class CurveClass:
    word: str
    deck: GroupElement

    @classmethod
    def from_word(cls, G: FuchsianGroup, word: str) -> "CurveClass":
        w = cyclically_reduce(word)
        if not w:
            raise ValueError(f"word {word!r} is trivial")
        return cls(w, G.element(w))

    @property
    def hyperbolic_length(self) -> float:
        return translation_length(self.deck)

    def primitive(self, G: FuchsianGroup) -> Tuple["CurveClass", int]:
        root, k = word_root(self.word)
        return (self, 1) if k == 1 else (CurveClass(root, G.element(root)), k)


def curve_list(G: FuchsianGroup, words: Iterable[str]) -> List[CurveClass]:
    return [CurveClass.from_word(G, w) for w in words]


@dataclass(frozen=True, eq=False)
class ShortenedCurve:
    length: float
    iterations: int
    grad_norm: float
    path: np.ndarray
    certified: bool = True


def _axis_path(T: MobiusIsometry, n: int) -> np.ndarray:
    """n+1 points along the axis of T, centred at the axis point nearest 0, last = T(first)."""
    ell = translation_length(T)
    c = axis_point(T)
    to_c = MobiusIsometry.from_disk(1.0 + 0j, c)
    _, attracting = T.fixed_points()
    back = to_c.inverse()
    u = complex(back.apply(attracting))
    u /= abs(u)
    s = -0.5 * ell + ell * np.arange(n + 1) / n
    pts = to_c.apply(np.tanh(0.5 * s) * u)
    pts[-1] = T.apply(pts[0])
    return np.asarray(pts, dtype=complex)


def _colour_stride(n: int) -> int:
    """Smallest c >= 3 such that vertices i = k (mod c) sit at least three apart on the n-cycle."""
    for c in range(3, n + 1):
        if all(n - (k + c * ((n - 1 - k) // c)) + k >= 3 for k in range(c) if (n - 1 - k) // c >= 1):
            return c
    return n


def _path_objective(metric: MetricOnSurface, T: MobiusIsometry, n: int, n_gauss: int):
    """Raw length of the closed polygon and its gradient, both as functions of x = (Re p, Im p)."""

    def lengths(a, b):
        return metric.segment_lengths(a, b, n_gauss)

    def evaluate(x: np.ndarray) -> Tuple[float, np.ndarray]:
        pts = x[:n] + 1j * x[n:]
        pn = complex(T.apply(pts[0]))
        A, B = pts, np.append(pts[1:], pn)
        base = lengths(A, B)
        h = 1e-7 * (1.0 - np.abs(pts) ** 2)
        hB = np.append(h[1:], 1e-7 * (1.0 - abs(pn) ** 2))
        grad = np.zeros(n, dtype=complex)
        g_end = 0j
        for e in (1.0, 1j):
            d_start = (lengths(A + h * e, B) - lengths(A - h * e, B)) / (2.0 * h)
            d_end = (lengths(A, B + hB * e) - lengths(A, B - hB * e)) / (2.0 * hB)
            comp = d_start.copy()
            comp[1:] += d_end[:-1]
            grad += e * comp
            g_end += e * d_end[-1]
        grad[0] += np.conj(T.derivative(pts[0])) * g_end
        return float(base.sum()), np.concatenate([grad.real, grad.imag])

    return evaluate


def _inside(x: np.ndarray, n: int) -> bool:
    return bool(np.all(np.isfinite(x)) and np.all(np.abs(x[:n] + 1j * x[n:]) < 1.0 - 1e-12))


def _gradient_hessian(evaluate, x: np.ndarray, n: int, stride: int) -> csr_matrix:
    """Sparse Hessian of the polygon length by coloured central differences of the gradient.

    The gradient at vertex i depends on vertices i-1, i, i+1 only (cyclically, through
    the deck transformation), so one difference per colour class and direction suffices.
    """
    pts = x[:n] + 1j * x[n:]
    delta = 1e-5 * (1.0 - np.abs(pts) ** 2)
    rows, cols, vals = [], [], []
    for k in range(stride):
        js = np.arange(k, n, stride)
        for e in (0, 1):
            step = np.zeros(2 * n)
            step[e * n + js] = delta[js]
            dg = (evaluate(x + step)[1] - evaluate(x - step)[1]) / 2.0
            for off in (-1, 0, 1):
                i = (js + off) % n
                for comp in (0, 1):
                    rows.append(comp * n + i)
                    cols.append(e * n + js)
                    vals.append(dg[comp * n + i] / delta[js])
    H = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n)
    ).tocsr()
    return 0.5 * (H + H.T)


def _polish(evaluate, x: np.ndarray, n: int, tol: float, max_rounds: int) -> Tuple[np.ndarray, float, int]:
    """Damped Newton on the gradient of the length; returns (x, gradient norm, rounds)."""
    _, g = evaluate(x)
    gnorm = float(np.linalg.norm(g))
    stride = _colour_stride(n)
    mu = 1e-12
    rounds = 0
    while gnorm > tol and rounds < max_rounds:
        rounds += 1
        H = _gradient_hessian(evaluate, x, n, stride)
        scale = float(np.abs(H.diagonal()).mean()) or 1.0
        moved = False
        for _ in range(8):
            A = (H + identity(2 * n, format="csr") * (mu * scale)).tocsc()
            dx = spsolve(A, -g)
            xn = x + dx
            if _inside(xn, n):
                _, gn = evaluate(xn)
                gn_norm = float(np.linalg.norm(gn))
                if gn_norm < gnorm:
                    x, g, gnorm = xn, gn, gn_norm
                    mu = max(mu * 0.1, 1e-12)
                    moved = True
                    break
            mu *= 100.0
        if not moved:
            break
    return x, gnorm, rounds


def shorten(
    metric: MetricOnSurface,
    curve: CurveClass,
    *,
    segments: int = 256,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    n_gauss: int = GAUSS_POINTS,
) -> ShortenedCurve:
    """Equivariant polygon p_0..p_n with p_n = deck(p_0), shortened in the metric.

    L-BFGS-B runs on the length, then a sparse Newton polish drives the raw gradient
    norm below ``tol``. Rounds repeat while the length still drops. A smooth metric
    that ends above ``tol`` raises ShorteningStalled; a piecewise-smooth one (mesh
    interpolation, cone points of a flat metric) is accepted uncertified once a full
    round no longer shortens it.
    """
    if segments < 3:
        raise ValueError("need at least three segments")
    T = curve.deck.matrix
    n = int(segments)
    seed = _axis_path(T, n)
    evaluate = _path_objective(metric, T, n, n_gauss)
    x = np.concatenate([seed[:-1].real, seed[:-1].imag])
    length, _ = evaluate(x)
    if not length > 0.0:
        raise DegenerateMetric(f"{metric.tag}: seed path has length {length!r}")
    norm = length

    def fun(y: np.ndarray) -> Tuple[float, np.ndarray]:
        if not _inside(y, n):
            # outside the chart: steer back toward the origin
            return 1e10, y.copy()
        value, grad = evaluate(y)
        return value / norm, grad / norm

    iters = 0
    gnorm = math.inf
    while True:
        if iters >= max_iter:
            raise ShorteningStalled(
                f"{metric.tag}/{curve.word}: gradient {gnorm:.2e} above {tol:.1e} after {iters} iterations"
            )
        res = minimize(
            fun,
            x,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter - iters, "gtol": tol / (norm * math.sqrt(2 * n)), "ftol": 0.0, "maxcor": 20},
        )
        iters += int(res.nit)
        if not np.isfinite(res.fun) or res.fun >= 1e9 or not _inside(res.x, n):
            raise ShorteningStalled(f"{metric.tag}/{curve.word}: left the chart")
        x, gnorm, rounds = _polish(evaluate, res.x, n, tol, min(_POLISH_ROUNDS, max(max_iter - iters, 0)))
        iters += rounds
        new_length, _ = evaluate(x)
        if gnorm <= tol or length - new_length <= 1e-12 * new_length:
            length = new_length
            break
        length = new_length

    certified = gnorm <= tol
    if not certified:
        if metric.smooth:
            raise ShorteningStalled(f"{metric.tag}/{curve.word}: gradient {gnorm:.2e} not reduced below {tol:.1e}")
        logger.debug("shorten %s/%s: piecewise-smooth metric, stationary at gradient %.2e", metric.tag, curve.word, gnorm)
    pts = x[:n] + 1j * x[n:]
    path = np.append(pts, complex(T.apply(pts[0])))
    logger.debug("shorten %s/%s: length=%.10f iters=%d grad=%.2e", metric.tag, curve.word, length, iters, gnorm)
    return ShortenedCurve(length, iters, gnorm, path, certified)


def geodesic_length(metric: MetricOnSurface, curve: CurveClass, **params) -> float:
    return shorten(metric, curve, **params).length


@dataclass(frozen=True)
class SandwichRow:
    word: str
    pullback_1: float
    pullback_2: float
    induced_full: float
    slack: float

    @property
    def ok(self) -> bool:
        s = self.slack
        return (
            self.pullback_1 <= self.induced_full + s
            and self.pullback_2 <= self.induced_full + s
            and self.induced_full <= self.pullback_1 + self.pullback_2 + s
        )


@dataclass(frozen=True)
class SandwichReport:
    rows: Tuple[SandwichRow, ...]

    @property
    def violations(self) -> List[str]:
        return [r.word for r in self.rows if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.violations


def length_sandwich_check(
    system: HarmonicSystem,
    curves: Sequence[CurveClass],
    *,
    lengths: Optional[Dict[Tuple[str, str], float]] = None,
    slack: float = 1e-3,
    **params,
) -> SandwichReport:
    """l(pullback_i) <= l(induced_full) <= l(pullback_1) + l(pullback_2) per curve.

    `lengths` may carry precomputed values keyed by (tag, word).
    """
    table = dict(lengths or {})
    tags = ("pullback_1", "pullback_2", "induced_full")
    metrics = {}
    for c in curves:
        for tag in tags:
            if (tag, c.word) not in table:
                if tag not in metrics:
                    metrics[tag] = make_metric(tag, system=system)
                table[(tag, c.word)] = geodesic_length(metrics[tag], c, **params)
    rows = tuple(
        SandwichRow(c.word, table[("pullback_1", c.word)], table[("pullback_2", c.word)], table[("induced_full", c.word)], slack)
        for c in curves
    )
    report = SandwichReport(rows)
    if not report.ok:
        logger.warning("length sandwich violated for %s", ", ".join(report.violations))
    return report


def distance_to_axis(z, T: MobiusIsometry) -> np.ndarray:
    """Hyperbolic distance from chart points to the translation axis of T."""
    rep, att = T.fixed_points()
    c = axis_point(T)
    r = (np.asarray(z, dtype=complex) - rep) / (np.asarray(z, dtype=complex) - att)
    ref = (c - rep) / (c - att)
    # rotate so the axis is the imaginary half-line of a half-plane
    w = r * 1j * np.conj(ref) / abs(ref)
    return np.arcsinh(np.abs(w.real) / np.maximum(np.abs(w.imag), 1e-300))
