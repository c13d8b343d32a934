from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from minlag.core.constants import (
    ALPHABET,
    DISK_MARGIN,
    MATRIX_TOL,
    OCTAGON_CIRCUMRADIUS,
    OCTAGON_INRADIUS,
    RELATION_WORD,
    TRACE_CUTOFF,
)
from minlag.errors import BudgetExceeded, EllipticOrParabolic

logger = logging.getLogger(__name__)

_INVERSE_LETTER = {ch: ch.swapcase() for ch in ALPHABET}


@dataclass(frozen=True)
class DiskPoint:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite disk point ({self.x}, {self.y})")
        if math.hypot(self.x, self.y) >= 1.0 - DISK_MARGIN:
            raise ValueError(f"point ({self.x}, {self.y}) is not inside the unit disk")

    @classmethod
    def from_complex(cls, z: complex) -> "DiskPoint":
        return cls(float(z.real), float(z.imag))

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)


def sigma(z):
    """Conformal factor 4/(1-|z|^2)^2 of the hyperbolic metric in the disk chart."""
    r2 = np.abs(z) ** 2
    return 4.0 / (1.0 - r2) ** 2


@dataclass(frozen=True)
class MobiusIsometry:
    """Projective SL(2,R) matrix acting on the disk through the Cayley transform.

    The disk coefficients are alpha = ((a+d) + i(b-c))/2 and
    beta = ((a-d) - i(b+c))/2, acting by z -> (alpha z + beta)/(conj(beta) z + conj(alpha)).
    """

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> "MobiusIsometry":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_disk(cls, alpha: complex, beta: complex) -> "MobiusIsometry":
        a = alpha.real + beta.real
        d = alpha.real - beta.real
        b = alpha.imag - beta.imag
        c = -alpha.imag - beta.imag
        return cls._normalized(a, b, c, d)

    @classmethod
    def translation(cls, length: float, angle: float = 0.0) -> "MobiusIsometry":
        """Translation by `length` along the diameter pointing at `angle`."""
        half = 0.5 * length
        rot = cls.rotation(angle)
        core = cls.from_disk(complex(math.cosh(half)), complex(math.sinh(half)))
        return rot.compose(core).compose(rot.inverse())

    @classmethod
    def rotation(cls, angle: float) -> "MobiusIsometry":
        return cls.from_disk(complex(math.cos(angle / 2), math.sin(angle / 2)), 0j)

    @staticmethod
    def _normalized(a: float, b: float, c: float, d: float) -> "MobiusIsometry":
        det = a * d - b * c
        if not det > 0.0:
            raise ValueError(f"matrix determinant {det} is not positive")
        s = 1.0 / math.sqrt(det)
        return MobiusIsometry(a * s, b * s, c * s, d * s)

    @property
    def alpha(self) -> complex:
        return complex(0.5 * (self.a + self.d), 0.5 * (self.b - self.c))

    @property
    def beta(self) -> complex:
        return complex(0.5 * (self.a - self.d), -0.5 * (self.b + self.c))

    @property
    def trace(self) -> float:
        return self.a + self.d

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def entries(self) -> Tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def compose(self, other: "MobiusIsometry") -> "MobiusIsometry":
        """self after other."""
        a = self.a * other.a + self.b * other.c
        b = self.a * other.b + self.b * other.d
        c = self.c * other.a + self.d * other.c
        d = self.c * other.b + self.d * other.d
        return MobiusIsometry._normalized(a, b, c, d)

    def inverse(self) -> "MobiusIsometry":
        return MobiusIsometry(self.d, -self.b, -self.c, self.a)

    def apply(self, z):
        al, be = self.alpha, self.beta
        return (al * z + be) / (be.conjugate() * z + al.conjugate())

    def derivative(self, z):
        al, be = self.alpha, self.beta
        return 1.0 / (be.conjugate() * z + al.conjugate()) ** 2

    def close_to(self, other: "MobiusIsometry", tol: float = MATRIX_TOL) -> bool:
        scale = max(1.0, *(abs(v) for v in self.entries()))
        plus = max(abs(x - y) for x, y in zip(self.entries(), other.entries()))
        minus = max(abs(x + y) for x, y in zip(self.entries(), other.entries()))
        return min(plus, minus) <= tol * scale

    def fixed_points(self) -> Tuple[complex, complex]:
        """(repelling, attracting) fixed points on the unit circle."""
        al, be = self.alpha, self.beta
        bc = be.conjugate()
        if abs(bc) < 1e-300:
            raise EllipticOrParabolic("isometry fixes the origin")
        disc = np.sqrt(complex((al.conjugate() - al) ** 2 + 4.0 * abs(be) ** 2))
        roots = [((al - al.conjugate()) + s * disc) / (2.0 * bc) for s in (1.0, -1.0)]
        roots.sort(key=lambda r: abs(self.derivative(r)))
        attracting, repelling = roots[0], roots[1]
        return repelling, attracting

    def to_json(self) -> Dict[str, float]:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class GroupElement:
    word: str
    matrix: MobiusIsometry

    def inverse(self) -> "GroupElement":
        return GroupElement(invert_word(self.word), self.matrix.inverse())


@dataclass(frozen=True, eq=False)
class FuchsianGroup:
    generators: Dict[str, MobiusIsometry]
    relation: str
    octagon: Tuple[DiskPoint, ...]
    side_midpoints: Tuple[DiskPoint, ...] = field(default=())

    def element(self, word: str) -> GroupElement:
        m = MobiusIsometry.identity()
        for ch in word:
            m = m.compose(self.generators[ch])
        return GroupElement(word, m)

    def side_pairing(self, side: int) -> Tuple[str, int]:
        """(letter, partner side) for the generator mapping `side` onto its partner.

        Side k has its midpoint at angle k*pi/4. Generator k (k < 4) maps side k+4
        onto side k; its inverse maps side k onto side k+4.
        """
        side %= 8
        if side >= 4:
            return ALPHABET[side - 4], side - 4
        return ALPHABET[side + 4], side + 4

    def relation_product(self) -> MobiusIsometry:
        return self.element(self.relation).matrix


def invert_word(word: str) -> str:
    return "".join(_INVERSE_LETTER[ch] for ch in reversed(word))


def reduce_word(word: str) -> str:
    out: List[str] = []
    for ch in word:
        if out and out[-1] == _INVERSE_LETTER[ch]:
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def cyclically_reduce(word: str) -> str:
    w = reduce_word(word)
    while len(w) >= 2 and w[0] == _INVERSE_LETTER[w[-1]]:
        w = w[1:-1]
    return w


def word_root(word: str) -> Tuple[str, int]:
    """(r, k) with word == r * k and k maximal; word must be cyclically reduced."""
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p], n // p
    return word, 1


def build_octagon_group() -> FuchsianGroup:
    """Regular octagon with interior angles pi/4, opposite sides paired."""
    generators: Dict[str, MobiusIsometry] = {}
    for k in range(4):
        g = MobiusIsometry.translation(2.0 * OCTAGON_INRADIUS, k * math.pi / 4)
        generators[ALPHABET[k]] = g
        generators[ALPHABET[k + 4]] = g.inverse()
    rv = math.tanh(OCTAGON_CIRCUMRADIUS / 2)
    rm = math.tanh(OCTAGON_INRADIUS / 2)
    octagon = tuple(
        DiskPoint(rv * math.cos(math.pi / 8 + j * math.pi / 4), rv * math.sin(math.pi / 8 + j * math.pi / 4))
        for j in range(8)
    )
    mids = tuple(DiskPoint(rm * math.cos(k * math.pi / 4), rm * math.sin(k * math.pi / 4)) for k in range(8))
    return FuchsianGroup(generators=generators, relation=RELATION_WORD, octagon=octagon, side_midpoints=mids)


def dist(p, q) -> float:
    zp = p.z if isinstance(p, DiskPoint) else complex(p)
    zq = q.z if isinstance(q, DiskPoint) else complex(q)
    return float(disk_dist(zp, zq))


def disk_dist(zp, zq):
    """Vectorized hyperbolic distance in the disk chart."""
    num = np.abs(np.asarray(zp) - np.asarray(zq))
    den = np.abs(1.0 - np.conj(zq) * zp)
    return 2.0 * np.arctanh(np.minimum(num / den, 1.0 - 1e-16))


def translation_length(g) -> float:
    m = g.matrix if isinstance(g, GroupElement) else g
    tr = abs(m.trace)
    if tr <= TRACE_CUTOFF:
        raise EllipticOrParabolic(f"|trace| = {tr!r} is not hyperbolic")
    return 2.0 * math.acosh(tr / 2.0)


def _canonical_sign(m: MobiusIsometry) -> Tuple[float, float, float, float]:
    e = m.entries()
    lead = m.trace if abs(m.trace) > 1e-9 else next((v for v in e if abs(v) > 1e-9), 1.0)
    s = 1.0 if lead > 0 else -1.0
    return tuple(s * v for v in e)  # type: ignore[return-value]


class _MatrixIndex:
    """Projective matrix set with tolerance lookups via two offset grids."""

    _GRID = 1e8

    def __init__(self) -> None:
        self._grids: Tuple[Dict[tuple, int], Dict[tuple, int]] = ({}, {})
        self.items: List[GroupElement] = []

    def _keys(self, m: MobiusIsometry) -> Tuple[tuple, tuple]:
        e = _canonical_sign(m)
        scale = max(1.0, *(abs(v) for v in e))
        q = [v / scale * self._GRID for v in e]
        return tuple(math.floor(v) for v in q), tuple(math.floor(v + 0.5) for v in q)

    def find(self, m: MobiusIsometry) -> int:
        for grid, key in zip(self._grids, self._keys(m)):
            idx = grid.get(key)
            if idx is not None and self.items[idx].matrix.close_to(m):
                return idx
        return -1

    def add(self, g: GroupElement) -> bool:
        if self.find(g.matrix) >= 0:
            return False
        idx = len(self.items)
        self.items.append(g)
        for grid, key in zip(self._grids, self._keys(g.matrix)):
            grid.setdefault(key, idx)
        return True

    def __len__(self) -> int:
        return len(self.items)


def group_ball(G: FuchsianGroup, max_word_length: int, cap: int = 250_000) -> List[GroupElement]:
    """Distinct elements with reduced words of length <= max_word_length."""
    if max_word_length < 0:
        raise ValueError("max_word_length must be >= 0")
    index = _MatrixIndex()
    index.add(GroupElement("", MobiusIsometry.identity()))
    frontier = [index.items[0]]
    for length in range(1, max_word_length + 1):
        nxt: List[GroupElement] = []
        for g in frontier:
            last = g.word[-1] if g.word else ""
            for ch in ALPHABET:
                if last and ch == _INVERSE_LETTER[last]:
                    continue
                h = GroupElement(g.word + ch, g.matrix.compose(G.generators[ch]))
                if index.add(h):
                    nxt.append(h)
                    if len(index) > cap:
                        raise BudgetExceeded(f"group ball exceeds {cap} elements at word length {length}")
        frontier = nxt
        logger.debug("group_ball: length %d -> %d elements", length, len(index))
    return list(index.items)


def displacement(g: GroupElement) -> float:
    return dist(0j, complex(g.matrix.apply(0j)))


def displacement_ball(G: FuchsianGroup, radius: float, cap: int = 500_000) -> List[GroupElement]:
    """Elements with dist(0, g.0) <= radius, by breadth-first search over tiles.

    Tiles crossed by a geodesic from 0 have centres within the circumradius of
    it, so expanding every tile with displacement <= radius + circumradius
    reaches the whole ball.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    horizon = radius + OCTAGON_CIRCUMRADIUS + 1e-9
    index = _MatrixIndex()
    ident = GroupElement("", MobiusIsometry.identity())
    index.add(ident)
    queue = deque([ident])
    inside: List[Tuple[float, int]] = [(0.0, 0)]
    while queue:
        g = queue.popleft()
        last = g.word[-1] if g.word else ""
        for ch in ALPHABET:
            if last and ch == _INVERSE_LETTER[last]:
                continue
            m = g.matrix.compose(G.generators[ch])
            d = dist(0j, complex(m.apply(0j)))
            if d > horizon:
                continue
            h = GroupElement(g.word + ch, m)
            if not index.add(h):
                continue
            if len(index) > cap:
                raise BudgetExceeded(f"displacement ball search exceeds {cap} elements at radius {radius}")
            queue.append(h)
            if d <= radius:
                inside.append((d, len(index) - 1))
    inside.sort(key=lambda t: (round(t[0], 9), index.items[t[1]].word))
    logger.debug("displacement_ball: radius %.3f -> %d elements (%d searched)", radius, len(inside), len(index))
    return [index.items[i] for _, i in inside]


def _disk_coefficients(elements: Sequence[MobiusIsometry]) -> Tuple[np.ndarray, np.ndarray]:
    al = np.array([m.alpha for m in elements], dtype=complex)
    be = np.array([m.beta for m in elements], dtype=complex)
    return al, be


def reduce_to_domain(G: FuchsianGroup, z, max_steps: int = 200) -> Tuple[np.ndarray, np.ndarray]:
    """Map points into the closed octagon by greedy side pairings.

    Returns (w, dw) with w = gamma(z) in the octagon and dw = gamma'(z).
    """
    z = np.array(z, dtype=complex, ndmin=1)
    w = z.copy()
    dw = np.ones_like(w)
    al, be = _disk_coefficients([G.generators[ch] for ch in ALPHABET])
    for _ in range(max_steps):
        den = np.conj(be)[:, None] * w[None, :] + np.conj(al)[:, None]
        images = (al[:, None] * w[None, :] + be[:, None]) / den
        mods = np.abs(images)
        best = np.argmin(mods, axis=0)
        cols = np.arange(w.size)
        move = mods[best, cols] < np.abs(w) - 1e-13
        if not move.any():
            break
        dw[move] = dw[move] / den[best[move], cols[move]] ** 2
        w[move] = images[best[move], cols[move]]
    return w, dw


def axis_point(m: MobiusIsometry) -> complex:
    """Point of the translation axis of m closest to the origin."""
    z1, z2 = m.fixed_points()
    s = z1 + z2
    if abs(s) < 1e-12:
        return 0j
    u = s / abs(s)
    cos_half = min(abs(s) / 2.0, 1.0)
    sin_half = math.sqrt(max(0.0, 1.0 - cos_half * cos_half))
    r = (1.0 - sin_half) / cos_half
    return complex(r * u)


def orbit_images(elements: Iterable[GroupElement], z: complex) -> np.ndarray:
    al, be = _disk_coefficients([g.matrix for g in elements])
    return (al * z + be) / (np.conj(be) * z + np.conj(al))


def group_to_json(G: FuchsianGroup) -> Dict:
    return {
        "generators": {ch: G.generators[ch].to_json() for ch in ALPHABET},
        "relation": G.relation,
        "octagon": [[p.x, p.y] for p in G.octagon],
    }
