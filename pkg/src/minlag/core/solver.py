from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import spsolve

from minlag.core.constants import EULER_CHAR, NEWTON_MAX_ITER, NEWTON_TOL, NU_FLOOR, ZERO_EXCLUSION
from minlag.core.hyperbolic import DiskPoint, sigma
from minlag.core.mesh import EquivariantMesh, ScalarField, integrate, laplacian_apply
from minlag.core.qdiff import QuadDifferential, flat_distance_to_zeros, find_zeros, l1_norm
from minlag.errors import DegenerateMetric, NewtonDivergence

logger = logging.getLogger(__name__)

_ARMIJO = 1e-4
_MAX_HALVINGS = 40


@dataclass(frozen=True, eq=False)
class HarmonicSystem:
    """Solved Bochner equation for w = log H, with the derived densities."""

    w: ScalarField
    P: ScalarField
    H: ScalarField
    L: ScalarField
    e: ScalarField
    J: ScalarField
    nu: ScalarField
    G: ScalarField
    energy: float
    q: QuadDifferential
    mesh: EquivariantMesh = field(repr=False)
    residual: float = 0.0
    iterations: int = 0

    @property
    def min_J(self) -> float:
        return float(self.J.values.min())


@dataclass(frozen=True, eq=False)
class MaximalSystem:
    u: ScalarField
    P: ScalarField
    H: ScalarField                 # induced metric is H * sigma
    q: QuadDifferential
    mesh: EquivariantMesh = field(repr=False)
    residual: float = 0.0
    iterations: int = 0


def sample_P(mesh: EquivariantMesh, q: QuadDifferential, sigma_fn: Callable = sigma) -> ScalarField:
    """|f|^2 / sigma^2 at the canonical vertices; depends on |f| only."""
    pos = mesh.positions
    if q.is_zero:
        return ScalarField(np.zeros(pos.size))
    return ScalarField((q.modulus(pos) / sigma_fn(pos)) ** 2)


def _line_search(residual, sup, x: np.ndarray, step: np.ndarray, err: float):
    """Armijo halving on the sup-norm residual; None when no halving decreases it."""
    lam = 1.0
    for _ in range(_MAX_HALVINGS):
        trial = x + lam * step
        rt = residual(trial)
        et = sup(rt)
        if np.all(np.isfinite(rt)) and et < (1.0 - _ARMIJO * lam) * err:
            return trial, rt, et, lam
        lam *= 0.5
    return None


def _newton(
    mesh: EquivariantMesh,
    source: Callable[[np.ndarray], np.ndarray],
    slope: Callable[[np.ndarray], np.ndarray],
    *,
    tol: float,
    max_iter: int,
    tag: str,
) -> Tuple[np.ndarray, float, int]:
    """Damped Newton for S x = A * source(x), where S is the stiffness matrix.

    slope(x) is d source / dx; it must be positive, which makes -S + diag(A*slope)
    positive definite.
    """
    S = mesh.stiffness
    A = mesh.vertex_area
    x = np.zeros(mesh.n_vertices)

    def residual(v: np.ndarray) -> np.ndarray:
        return S @ v - A * source(v)

    def sup(r: np.ndarray) -> float:
        return float(np.max(np.abs(r / A)))

    r = residual(x)
    err = sup(r)
    it = 0
    while err > tol:
        if it >= max_iter:
            raise NewtonDivergence(f"{tag}: residual {err:.3e} after {it} Newton steps")
        d = slope(x)
        if not np.all(d > 0.0):
            raise AssertionError(f"{tag}: linearization lost positivity")
        M = (-S + diags(A * d)).tocsc()
        step = spsolve(M, r)
        lin = float(np.linalg.norm(M @ step - r) / max(np.linalg.norm(r), 1e-300))
        found = _line_search(residual, sup, x, step, err)
        if found is None:
            raise NewtonDivergence(f"{tag}: line search failed at residual {err:.3e} (tolerance {tol:.1e})")
        x, r, err, lam = found
        it += 1
        logger.debug("%s: iter=%d step=%.3g residual=%.3e linear=%.1e", tag, it, lam, err, lin)
    return x, err, it


def solve_bochner(
    mesh: EquivariantMesh,
    q: QuadDifferential,
    *,
    sigma_fn: Callable = sigma,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> HarmonicSystem:
    """Solve Lap_sigma w = 2 e^w - 2 P e^-w - 2 from w = 0."""
    P = sample_P(mesh, q, sigma_fn)
    p = P.values
    w, err, it = _newton(
        mesh,
        lambda v: 2.0 * np.exp(v) - 2.0 * p * np.exp(-v) - 2.0,
        lambda v: 2.0 * np.exp(v) + 2.0 * p * np.exp(-v),
        tol=tol,
        max_iter=max_iter,
        tag="bochner",
    )
    H = np.exp(w)
    L = p * np.exp(-w)
    J = H - L
    if np.any(J <= 0.0):
        raise DegenerateMetric(f"jacobian not positive, min {float(J.min()):.3e}")
    nu = np.sqrt(p) * np.exp(-w)
    G = -np.log(np.maximum(nu, NU_FLOOR))
    e = H + L
    energy = float(np.dot(e, mesh.vertex_area))
    logger.info("bochner: iters=%d residual=%.2e energy=%.9f min_J=%.3e", it, err, energy, float(J.min()))
    return HarmonicSystem(
        w=ScalarField(w),
        P=P,
        H=ScalarField(H),
        L=ScalarField(L),
        e=ScalarField(e),
        J=ScalarField(J),
        nu=ScalarField(nu),
        G=ScalarField(G),
        energy=energy,
        q=q,
        mesh=mesh,
        residual=err,
        iterations=it,
    )


def total_energy(sys: HarmonicSystem, mesh: EquivariantMesh) -> float:
    return integrate(mesh, sys.e)


def jacobian_integral(sys: HarmonicSystem, mesh: EquivariantMesh) -> float:
    return integrate(mesh, sys.J)


def energy_identity(sys: HarmonicSystem, mesh: EquivariantMesh) -> Dict[str, float]:
    """E against 2 * int H + 2 pi chi."""
    E = total_energy(sys, mesh)
    rhs = 2.0 * integrate(mesh, sys.H) + 2.0 * math.pi * EULER_CHAR
    return {"energy": E, "predicted": rhs, "gap": abs(E - rhs)}


def energy_l1_bounds(energy: float, l1: float) -> Dict[str, float]:
    """E + 2 pi chi <= 2 ||Phi|| <= E - 2 pi chi, with slack reported."""
    lo = energy + 2.0 * math.pi * EULER_CHAR
    hi = energy - 2.0 * math.pi * EULER_CHAR
    return {
        "lower": lo,
        "upper": hi,
        "two_l1": 2.0 * l1,
        "deficit": max(lo - 2.0 * l1, 2.0 * l1 - hi, 0.0),
    }


def minsky_radius_bound(r: float) -> float:
    return math.asinh(2.0 / (r * r))


@dataclass(frozen=True)
class MinskyReport:
    checked: int
    violations: Tuple[Tuple[int, float, float], ...]   # (vertex, G, bound)
    max_excess: float
    systole_proxy: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "checked": self.checked,
            "violations": [list(v) for v in self.violations],
            "max_excess": self.max_excess,
            "systole_proxy": self.systole_proxy,
        }


def minsky_bound_check(
    sys: HarmonicSystem,
    q: QuadDifferential,
    mesh: EquivariantMesh,
    *,
    zeros: Optional[Sequence[Tuple[DiskPoint, int]]] = None,
    samples: int = 200,
    slack: float = 5e-2,
) -> MinskyReport:
    """G(p) <= asinh(2 / r(p)^2) at sampled vertices, r the flat embedded-disk radius.

    r is the flat distance to the nearest zero, capped by sqrt(||Phi|| / pi).
    """
    if q.is_zero:
        raise ValueError("the bound needs a non-zero differential")
    if zeros is None:
        zeros = find_zeros(q, mesh)
    idx = np.unique(np.linspace(0, mesh.n_vertices - 1, min(samples, mesh.n_vertices)).astype(int))
    pts = mesh.positions[idx]
    cap = math.sqrt(l1_norm(q, mesh) / math.pi)
    r = np.minimum(flat_distance_to_zeros(q, pts, zeros), cap)
    G = sys.G.values[idx]
    viol: List[Tuple[int, float, float]] = []
    worst = -math.inf
    for v, g, rr in zip(idx, G, r):
        if rr <= 0.0:
            continue
        bound = minsky_radius_bound(float(rr))
        worst = max(worst, float(g) - bound)
        if g > bound + slack:
            viol.append((int(v), float(g), bound))
    logger.debug("minsky: checked=%d violations=%d max_excess=%.3e", idx.size, len(viol), worst)
    return MinskyReport(int(idx.size), tuple(viol), worst, cap)


def subharmonicity_check(
    sys: HarmonicSystem,
    mesh: EquivariantMesh,
    zeros: Sequence[Tuple[DiskPoint, int]],
    *,
    exclusion: float = ZERO_EXCLUSION,
) -> float:
    """Minimum of the discrete Laplacian of G over vertices at flat distance >= exclusion from zeros."""
    lap = laplacian_apply(mesh, sys.G).values
    if sys.q.is_zero or not zeros:
        return float(lap.min())
    d = flat_distance_to_zeros(sys.q, mesh.positions, zeros)
    # the one-ring must stay off the zeros as well
    keep = d >= exclusion
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    ring_ok = keep.copy()
    np.logical_and.at(ring_ok, i, keep[j])
    np.logical_and.at(ring_ok, j, keep[i])
    if not ring_ok.any():
        return math.inf
    return float(lap[ring_ok].min())


def chart_identity_gap(sys: HarmonicSystem, mesh: EquivariantMesh, floor: float = 1e-10) -> float:
    """Max relative error of sigma*e = |f| (1/|nu| + |nu|) where |f| > floor."""
    pos = mesh.positions
    s = sigma(pos)
    f = sys.q.modulus(pos)
    mask = f > floor
    if not mask.any():
        return 0.0
    nu = sys.nu.values[mask]
    lhs = s[mask] * sys.e.values[mask]
    rhs = f[mask] * (1.0 / nu + nu)
    return float(np.max(np.abs(lhs - rhs) / np.abs(lhs)))


def solve_maximal(
    mesh: EquivariantMesh,
    q: QuadDifferential,
    *,
    sigma_fn: Callable = sigma,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> MaximalSystem:
    """Solve Lap_sigma u = e^{2u} - P e^{-2u} - 1, P = |f|^2 / sigma^2."""
    P = sample_P(mesh, q, sigma_fn)
    p = P.values
    u, err, it = _newton(
        mesh,
        lambda v: np.exp(2.0 * v) - p * np.exp(-2.0 * v) - 1.0,
        lambda v: 2.0 * np.exp(2.0 * v) + 2.0 * p * np.exp(-2.0 * v),
        tol=tol,
        max_iter=max_iter,
        tag="maximal",
    )
    logger.info("maximal: iters=%d residual=%.2e", it, err)
    return MaximalSystem(
        u=ScalarField(u),
        P=P,
        H=ScalarField(np.exp(2.0 * u)),
        q=q,
        mesh=mesh,
        residual=err,
        iterations=it,
    )


def maximal_domination_check(ms: MaximalSystem, mesh: EquivariantMesh) -> float:
    """min over vertices of H*sigma / |f|; the maximal metric dominates |Phi| when >= 1."""
    pos = mesh.positions
    f = ms.q.modulus(pos)
    mask = f > 1e-12
    if not mask.any():
        return math.inf
    return float(np.min(ms.H.values[mask] * sigma(pos[mask]) / f[mask]))


def system_to_json(sys: HarmonicSystem, mesh: EquivariantMesh, *, t: float, checks: Optional[dict] = None) -> dict:
    l1 = 0.0 if sys.q.is_zero else l1_norm(sys.q, mesh)
    return {
        "t": t,
        "energy": sys.energy,
        "l1_norm": l1,
        "residual": sys.residual,
        "newton_iters": sys.iterations,
        "min_J": sys.min_J,
        "checks": dict(checks or {}),
    }
