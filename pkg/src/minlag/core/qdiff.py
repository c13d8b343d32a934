from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from minlag.core.constants import (
    BASIS_EXPONENTS,
    BRANCH_FLOOR,
    GAUSS_POINTS,
    GENUS,
    TAYLOR_RADIUS,
    TAYLOR_TERMS,
    TAYLOR_VALID,
)
from minlag.core.hyperbolic import (
    DiskPoint,
    FuchsianGroup,
    GroupElement,
    disk_dist,
    displacement_ball,
    group_ball,
    orbit_images,
    reduce_to_domain,
    sigma,
)
from minlag.core.mesh import EquivariantMesh
from minlag.errors import BranchTrackingFailure, TruncationInsufficient, ZeroCountMismatch

logger = logging.getLogger(__name__)

_CHUNK = 128
_CHUNK_CELLS = 2_000_000
_SAMPLE_SEED = 20240601
_SAMPLE_COUNT = 100
_CLUSTER = 0.1


@lru_cache(maxsize=8)
def gauss_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _direct_sums(alpha: np.ndarray, beta: np.ndarray, exponents: Sequence[int], z: np.ndarray, deriv: bool = False):
    """sum_gamma (gamma z)^m gamma'(z)^2, or its z-derivative, per exponent."""
    z = np.asarray(z, dtype=complex).ravel()
    out = np.zeros((len(exponents), z.size), dtype=complex)
    ca, cb = np.conj(alpha)[:, None], np.conj(beta)[:, None]
    chunk = max(1, min(_CHUNK, _CHUNK_CELLS // max(alpha.size, 1)))
    for start in range(0, z.size, chunk):
        zc = z[None, start:start + chunk]
        den = cb * zc + ca
        w = (alpha[:, None] * zc + beta[:, None]) / den
        inv = 1.0 / den
        d2 = inv ** 4
        for row, m in enumerate(exponents):
            if deriv:
                term = -4.0 * cb * inv * d2 * w ** m
                if m:
                    term = term + m * w ** (m - 1) * inv * inv * d2
            else:
                term = w ** m * d2
            out[row, start:start + chunk] = term.sum(axis=0)
    return out


@dataclass(frozen=True, eq=False)
class SeriesBasis:
    """Truncated Poincare series over a displacement ball, one per exponent."""

    group: FuchsianGroup
    elements: Tuple[GroupElement, ...]
    radius: float
    exponents: Tuple[int, ...]
    alpha: np.ndarray
    beta: np.ndarray
    taylor: np.ndarray            # (len(exponents), n) coefficients in z / TAYLOR_RADIUS
    residuals: np.ndarray         # absolute equivariance residual per exponent
    scales: np.ndarray            # max |Theta_m| over the sample points

    def raw(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).ravel()
        out = np.empty((len(self.exponents), z.size), dtype=complex)
        near = np.abs(z) <= TAYLOR_VALID
        if near.any():
            u = z[near] / TAYLOR_RADIUS
            for row in range(len(self.exponents)):
                out[row, near] = npoly.polyval(u, self.taylor[row])
        if (~near).any():
            out[:, ~near] = _direct_sums(self.alpha, self.beta, self.exponents, z[~near])
        return out

    def raw_derivative(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).ravel()
        out = np.empty((len(self.exponents), z.size), dtype=complex)
        near = np.abs(z) <= TAYLOR_VALID
        if near.any():
            u = z[near] / TAYLOR_RADIUS
            for row in range(len(self.exponents)):
                out[row, near] = npoly.polyval(u, npoly.polyder(self.taylor[row])) / TAYLOR_RADIUS
        if (~near).any():
            out[:, ~near] = _direct_sums(self.alpha, self.beta, self.exponents, z[~near], deriv=True)
        return out

    def relative_residuals(self) -> np.ndarray:
        return np.where(self.scales > 1e-10, self.residuals / np.maximum(self.scales, 1e-300), 0.0)


def _taylor_coefficients(alpha, beta, exponents) -> np.ndarray:
    k = np.arange(TAYLOR_TERMS)
    circle = TAYLOR_RADIUS * np.exp(2j * np.pi * k / TAYLOR_TERMS)
    samples = _direct_sums(alpha, beta, exponents, circle)
    coeffs = np.fft.fft(samples, axis=1) / TAYLOR_TERMS
    # drop the tail that cannot reach 1e-18 of the peak inside the valid disk
    reach = (TAYLOR_VALID / TAYLOR_RADIUS) ** k
    mags = np.abs(coeffs).max(axis=0) * reach
    keep = np.nonzero(mags > 1e-18 * mags.max())[0]
    n = int(keep[-1]) + 1 if keep.size else 1
    return coeffs[:, :n]


def sample_points(G: FuchsianGroup, count: int = _SAMPLE_COUNT, seed: int = _SAMPLE_SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = 0.85 * np.sqrt(rng.random(count))
    th = 2.0 * np.pi * rng.random(count)
    w, _ = reduce_to_domain(G, r * np.exp(1j * th))
    return w


def build_series_basis(
    G: FuchsianGroup,
    L: float,
    exponents: Sequence[int] = BASIS_EXPONENTS,
    *,
    tolerance: float = 1e-6,
    cap: int = 500_000,
) -> SeriesBasis:
    for m in exponents:
        if not 0 <= m <= 4:
            raise ValueError(f"exponent {m} outside 0..4")
    elements = tuple(displacement_ball(G, L, cap=cap))
    alpha = np.array([g.matrix.alpha for g in elements], dtype=complex)
    beta = np.array([g.matrix.beta for g in elements], dtype=complex)
    exps = tuple(int(m) for m in exponents)

    samples = sample_points(G)
    base = _direct_sums(alpha, beta, exps, samples)
    residuals = np.zeros(len(exps))
    for gen in G.generators.values():
        moved = gen.apply(samples)
        lhs = _direct_sums(alpha, beta, exps, moved) * gen.derivative(samples)[None, :] ** 2
        residuals = np.maximum(residuals, np.abs(lhs - base).max(axis=1))
    scales = np.abs(base).max(axis=1)
    basis = SeriesBasis(
        group=G,
        elements=elements,
        radius=float(L),
        exponents=exps,
        alpha=alpha,
        beta=beta,
        taylor=_taylor_coefficients(alpha, beta, exps),
        residuals=residuals,
        scales=scales,
    )
    rel = basis.relative_residuals()
    logger.info("series basis: L=%.2f elements=%d relative residuals=%s", L, len(elements), np.array2string(rel, precision=3))
    worst = float(rel.max()) if rel.size else 0.0
    if worst > tolerance:
        raise TruncationInsufficient(f"equivariance residual {worst:.3e} exceeds {tolerance:.1e} at L={L}")
    return basis


@dataclass(frozen=True, eq=False)
class QuadDifferential:
    """Phi = scale * exp(i*phase) * sum_k coefficients[k] * Theta_{m_k} dz^2."""

    basis: SeriesBasis
    coefficients: Tuple[complex, ...]
    scale: float = 1.0
    phase: float = 0.0
    tail_bound: float = field(default=0.0)

    def __post_init__(self) -> None:
        if len(self.coefficients) != len(self.basis.exponents):
            raise ValueError("coefficient count does not match the basis")
        if self.scale < 0.0:
            raise ValueError("scale must be non-negative")
        c = np.asarray(self.coefficients, dtype=complex)
        bound = self.scale * float(np.sum(np.abs(c) * self.basis.residuals))
        object.__setattr__(self, "coefficients", tuple(complex(v) for v in c))
        object.__setattr__(self, "tail_bound", bound)

    @property
    def group(self) -> FuchsianGroup:
        return self.basis.group

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0 or all(c == 0 for c in self.coefficients)

    def scaled(self, t: float) -> "QuadDifferential":
        return replace(self, scale=self.scale * float(t))

    def rotated(self, theta: float) -> "QuadDifferential":
        return replace(self, phase=self.phase + float(theta))

    def _core(self, z) -> np.ndarray:
        c = np.asarray(self.coefficients, dtype=complex)
        return c @ self.basis.raw(z)

    def _core_derivative(self, z) -> np.ndarray:
        c = np.asarray(self.coefficients, dtype=complex)
        return c @ self.basis.raw_derivative(z)

    def raw(self, z) -> np.ndarray:
        """Series value without reduction into the octagon."""
        if self.is_zero:
            return np.zeros(np.asarray(z).size, dtype=complex)
        return self.scale * cmath.exp(1j * self.phase) * self._core(z)

    def values(self, z) -> np.ndarray:
        """f(z), through reduction into the octagon and the transformation law."""
        z = np.asarray(z, dtype=complex).ravel()
        if self.is_zero:
            return np.zeros(z.size, dtype=complex)
        w, dw = reduce_to_domain(self.group, z)
        return self.raw(w) * dw ** 2

    def modulus(self, z) -> np.ndarray:
        """|f(z)|, independent of the phase."""
        z = np.asarray(z, dtype=complex).ravel()
        if self.is_zero:
            return np.zeros(z.size)
        w, dw = reduce_to_domain(self.group, z)
        return self.scale * np.abs(self._core(w)) * np.abs(dw) ** 2

    def to_json(self) -> dict:
        return {
            "basis": [[c.real, c.imag] for c in self.coefficients],
            "exponents": list(self.basis.exponents),
            "word_length": self.basis.radius,
            "scale": self.scale,
            "phase": self.phase,
            "tail_bound": self.tail_bound,
        }


@dataclass(frozen=True)
class FlatPathMeasure:
    value: float
    path: Tuple[complex, ...]

    def __post_init__(self) -> None:
        if not self.value >= 0.0:
            raise ValueError("transverse measure must be non-negative")

    def __add__(self, other: "FlatPathMeasure") -> "FlatPathMeasure":
        joined = self.path + other.path[1:] if self.path and other.path else self.path + other.path
        return FlatPathMeasure(self.value + other.value, joined)


def poincare_series(G: FuchsianGroup, m: int, L: float, *, tolerance: float = 1e-6) -> QuadDifferential:
    """Single Poincare series Theta_m truncated to the displacement ball of radius L.

    Odd exponents vanish identically on the octagon surface.
    """
    basis = build_series_basis(G, L, (m,), tolerance=tolerance)
    return QuadDifferential(basis, (1.0 + 0j,))


def combine(basis: SeriesBasis, coefficients: Sequence[complex]) -> QuadDifferential:
    return QuadDifferential(basis, tuple(complex(c) for c in coefficients))


def evaluate(q: QuadDifferential, z) -> complex:
    zz = z.z if isinstance(z, DiskPoint) else complex(z)
    return complex(q.values(np.array([zz]))[0])


def l1_norm(q: QuadDifferential, mesh: EquivariantMesh) -> float:
    """Chart integral of |f| over the octagon, as the sum of |f|/sigma times vertex area."""
    pos = mesh.positions
    return float(np.dot(q.modulus(pos) / sigma(pos), mesh.vertex_area))


def gram_matrix(basis: SeriesBasis, mesh: EquivariantMesh) -> np.ndarray:
    pos = mesh.positions
    w, dw = reduce_to_domain(basis.group, pos)
    vals = basis.raw(w) * (dw ** 2)[None, :]
    weight = mesh.vertex_area / sigma(pos) ** 2
    return (vals * weight[None, :]) @ np.conj(vals).T


def _winding_number(q: QuadDifferential, z0: complex, r: float, n: int = 256) -> int:
    ring = z0 + r * np.exp(2j * np.pi * np.arange(n + 1) / n)
    vals = q._core(ring)
    steps = np.angle(vals[1:] / vals[:-1])
    return int(round(float(np.sum(steps)) / (2.0 * np.pi)))


def _newton_polish(q: QuadDifferential, z: complex, floor: float, max_iter: int = 200) -> Tuple[complex, bool]:
    for _ in range(max_iter):
        f = complex(q._core(np.array([z]))[0])
        if abs(f) <= floor:
            return z, True
        fp = complex(q._core_derivative(np.array([z]))[0])
        if fp == 0:
            return z, False
        step = f / fp
        z = z - step
        if abs(z) > 0.99:
            return z, False
        if abs(step) < 1e-15:
            break
    return z, abs(complex(q._core(np.array([z]))[0])) <= 1e3 * floor


@lru_cache(maxsize=4)
def _short_ball(G: FuchsianGroup) -> Tuple[GroupElement, ...]:
    return tuple(group_ball(G, 4))


def _orbit_distance(G: FuchsianGroup, z1: complex, z2: complex) -> float:
    return float(np.min(disk_dist(orbit_images(_short_ball(G), z1), z2)))


def find_zeros(q: QuadDifferential, mesh: EquivariantMesh) -> List[Tuple[DiskPoint, int]]:
    """Zeros in the octagon with multiplicities, one representative per orbit."""
    if q.is_zero:
        raise ValueError("the zero differential has no isolated zeros")
    G = q.group
    pos = mesh.positions
    core = np.abs(q._core(pos))
    h = core / sigma(pos)
    nbr_min = np.full(h.size, np.inf)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    np.minimum.at(nbr_min, i, h[j])
    np.minimum.at(nbr_min, j, h[i])
    cands = np.nonzero(h <= nbr_min)[0]
    cands = cands[np.argsort(h[cands], kind="stable")]
    fmax = float(core.max())
    floor = 1e-14 * fmax

    found: List[complex] = []
    for v in cands:
        z, ok = _newton_polish(q, complex(pos[v]), floor)
        if not ok:
            continue
        w, _ = reduce_to_domain(G, np.array([z]))
        z = complex(w[0])
        if abs(complex(q._core(np.array([z]))[0])) >= 1e-8 * fmax:
            continue
        # truncation splits a multiple zero into a tight cluster; keep one per cluster
        if any(_orbit_distance(G, z, y) < _CLUSTER for y in found):
            continue
        found.append(z)
        if len(found) > 4 * (GENUS - 1) * 4:
            break

    out: List[Tuple[DiskPoint, int]] = []
    total = 0
    for k, z in enumerate(found):
        others = [y for n, y in enumerate(found) if n != k]
        sep = min((_orbit_distance(G, z, y) for y in others), default=1.0)
        rho = min(1.5 * _CLUSTER, 0.45 * sep)
        r = 0.5 * rho * (1.0 - abs(z) ** 2)
        mult = _winding_number(q, z, r)
        if mult <= 0:
            continue
        out.append((DiskPoint.from_complex(z), mult))
        total += mult
    out.sort(key=lambda t: (round(abs(t[0].z), 9), round(math.atan2(t[0].y, t[0].x), 9)))
    expected = 4 * (GENUS - 1)
    logger.debug("find_zeros: %d candidates, %d zeros, total multiplicity %d", cands.size, len(out), total)
    if total != expected:
        raise ZeroCountMismatch(f"zero multiplicities sum to {total}, expected {expected}")
    return out


def _segment_nodes(path: Sequence[complex], subdivisions: int, n_gauss: int):
    p = np.asarray(path, dtype=complex)
    if p.size < 2:
        return np.zeros((0, 0), dtype=complex), np.zeros(0, dtype=complex), np.zeros(0)
    x, w = gauss_rule(n_gauss)
    t = (np.arange(subdivisions)[:, None] + x[None, :]).ravel() / subdivisions
    wt = np.tile(w, subdivisions) / subdivisions
    a, b = p[:-1], p[1:]
    pts = a[:, None] + (b - a)[:, None] * t[None, :]
    return pts, b - a, wt


def _tracked_sqrt(f: np.ndarray) -> np.ndarray:
    """Square root continued along the last axis, re-seeded per row."""
    s = np.sqrt(f)
    if s.shape[-1] < 2:
        return s
    agree = np.real(s[..., 1:] * np.conj(s[..., :-1])) >= 0.0
    flips = np.where(agree, 1.0, -1.0)
    signs = np.concatenate([np.ones(s.shape[:-1] + (1,)), np.cumprod(flips, axis=-1)], axis=-1)
    return s * signs


def foliation_measure(
    q: QuadDifferential,
    path: Sequence[complex],
    theta: float,
    *,
    n_gauss: int = GAUSS_POINTS,
    subdivisions: int = 2,
) -> FlatPathMeasure:
    """Integral of |Re(exp(i theta) sqrt(f) dz)| along a polygonal chart path."""
    pts, dz, wt = _segment_nodes(path, subdivisions, n_gauss)
    if pts.size == 0:
        return FlatPathMeasure(0.0, tuple(complex(z) for z in path))
    f = q.values(pts.ravel()).reshape(pts.shape)
    if np.any(np.abs(f) < BRANCH_FLOOR):
        raise BranchTrackingFailure("path passes within the branch floor of a zero")
    root = _tracked_sqrt(f)
    integrand = np.abs(np.real(np.exp(1j * theta) * root * dz[:, None]))
    value = float(np.sum(integrand @ wt))
    return FlatPathMeasure(value, tuple(complex(z) for z in path))


def flat_path_length(q: QuadDifferential, path: Sequence[complex], *, n_gauss: int = GAUSS_POINTS, subdivisions: int = 2) -> float:
    pts, dz, wt = _segment_nodes(path, subdivisions, n_gauss)
    if pts.size == 0:
        return 0.0
    m = q.modulus(pts.ravel()).reshape(pts.shape)
    return float(np.sum((np.sqrt(m) * np.abs(dz)[:, None]) @ wt))


def zeta_increment(q: QuadDifferential, a: complex, b: complex, *, subdivisions: int = 16) -> complex:
    """Natural-coordinate displacement along the chart segment a -> b, principal branch at a."""
    pts, dz, wt = _segment_nodes([a, b], subdivisions, GAUSS_POINTS)
    f = q.values(np.concatenate([[a], pts.ravel()]))
    root = _tracked_sqrt(f[None, :])[0]
    if abs(f[0]) < BRANCH_FLOOR:
        raise BranchTrackingFailure("segment starts at a zero")
    return complex(np.sum(root[1:] * wt) * dz[0])


def _root_near(f: complex, ref: complex) -> complex:
    r = cmath.sqrt(f)
    return r if (r * ref.conjugate()).real >= 0.0 else -r


def flat_straight_path(q: QuadDifferential, start: complex, delta_zeta: complex, steps: int = 256) -> np.ndarray:
    """Chart path whose natural coordinate moves linearly by delta_zeta.

    Integrates dz/ds = delta_zeta / sqrt(f(z)) by RK4, continuing the principal
    branch of sqrt(f) at the start point.
    """
    z = complex(start)
    f0 = evaluate(q, z)
    if abs(f0) < BRANCH_FLOOR:
        raise BranchTrackingFailure("flat path starts at a zero")
    ref = cmath.sqrt(f0)
    out = [z]
    h = 1.0 / steps

    def rhs(p: complex, r: complex) -> Tuple[complex, complex]:
        fv = evaluate(q, p)
        if abs(fv) < BRANCH_FLOOR:
            raise BranchTrackingFailure("flat path runs into a zero")
        root = _root_near(fv, r)
        return delta_zeta / root, root

    for _ in range(steps):
        k1, r1 = rhs(z, ref)
        k2, _ = rhs(z + 0.5 * h * k1, r1)
        k3, _ = rhs(z + 0.5 * h * k2, r1)
        k4, r4 = rhs(z + h * k3, r1)
        z = z + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        ref = r4
        out.append(z)
    return np.array(out, dtype=complex)


def flat_distance_to_zeros(
    q: QuadDifferential,
    points: np.ndarray,
    zeros: Sequence[Tuple[DiskPoint, int]],
    *,
    nearest: int = 3,
) -> np.ndarray:
    """Flat length of the chart segment to the nearest zero image, per point."""
    G = q.group
    ball = group_ball(G, 2)
    images = np.concatenate([orbit_images(ball, z.z) for z, _ in zeros])
    pts = np.asarray(points, dtype=complex).ravel()
    hyp = disk_dist(pts[:, None], images[None, :])
    k = min(nearest, images.size)
    idx = np.argsort(hyp, axis=1, kind="stable")[:, :k]
    x, w = gauss_rule(GAUSS_POINTS)
    t = (np.arange(2)[:, None] + x[None, :]).ravel() / 2.0
    wt = np.tile(w, 2) / 2.0
    best = np.full(pts.size, np.inf)
    for col in range(k):
        target = images[idx[:, col]]
        seg = pts[:, None] + (target - pts)[:, None] * t[None, :]
        m = q.modulus(seg.ravel()).reshape(seg.shape)
        length = (np.sqrt(m) @ wt) * np.abs(target - pts)
        best = np.minimum(best, length)
    return best
