from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.spatial import cKDTree

from minlag.core.constants import DET_FLOOR, MIN_ANGLE_DEG, OCTAGON_INRADIUS
from minlag.core.hyperbolic import FuchsianGroup, MobiusIsometry, disk_dist, sigma
from minlag.errors import DegenerateMetric, MeshQualityFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("scalar field must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite entries")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class EquivariantMesh:
    nodes: np.ndarray              # chart positions, boundary copies included
    triangles: np.ndarray          # (T, 3) node indices, counter-clockwise
    canon: np.ndarray              # node -> canonical vertex
    representatives: np.ndarray    # canonical vertex -> representative node
    orbit_map: Dict[int, Tuple[int, MobiusIsometry]]
    edges: np.ndarray              # (E, 2) canonical vertex pairs, i < j
    edge_lengths: np.ndarray       # hyperbolic length per canonical edge
    edge_weights: np.ndarray       # cotangent weight per canonical edge
    vertex_area: np.ndarray        # lumped hyperbolic area per canonical vertex
    stiffness: csr_matrix          # symmetric, zero row sums
    target_h: float
    levels: int
    group: "FuchsianGroup | None" = field(default=None, repr=False)
    _locator: "TriangleLocator | None" = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return int(self.representatives.size)

    @property
    def positions(self) -> np.ndarray:
        return self.nodes[self.representatives]

    def euler_characteristic(self) -> int:
        return self.n_vertices - int(self.edges.shape[0]) + int(self.triangles.shape[0])

    def locator(self) -> "TriangleLocator":
        if self._locator is None:
            object.__setattr__(self, "_locator", TriangleLocator(self.nodes, self.triangles))
        return self._locator  # type: ignore[return-value]

    def interpolate(self, values: np.ndarray, w) -> np.ndarray:
        """Piecewise-linear interpolation of canonical values at points of the octagon."""
        tri, bary = self.locator().locate(w)
        node_vals = values[self.canon][self.triangles[tri]]
        return np.sum(node_vals * bary, axis=1)


class TriangleLocator:
    def __init__(self, nodes: np.ndarray, triangles: np.ndarray) -> None:
        self._p = np.column_stack([nodes.real, nodes.imag])
        self._tri = triangles
        centroids = self._p[triangles].mean(axis=1)
        self._tree = cKDTree(centroids)

    def locate(self, w, k: int = 12) -> Tuple[np.ndarray, np.ndarray]:
        w = np.asarray(w, dtype=complex).ravel()
        q = np.column_stack([w.real, w.imag])
        k = min(k, self._tri.shape[0])
        _, cand = self._tree.query(q, k=k)
        cand = cand.reshape(len(w), k)
        verts = self._p[self._tri[cand]]                    # (n, k, 3, 2)
        a, b, c = verts[..., 0, :], verts[..., 1, :], verts[..., 2, :]
        v0, v1, v2 = b - a, c - a, q[:, None, :] - a
        d00 = np.sum(v0 * v0, -1)
        d01 = np.sum(v0 * v1, -1)
        d11 = np.sum(v1 * v1, -1)
        d20 = np.sum(v2 * v0, -1)
        d21 = np.sum(v2 * v1, -1)
        den = d00 * d11 - d01 * d01
        lb = (d11 * d20 - d01 * d21) / den
        lc = (d00 * d21 - d01 * d20) / den
        la = 1.0 - lb - lc
        bary = np.stack([la, lb, lc], axis=-1)              # (n, k, 3)
        score = bary.min(axis=-1)
        pick = np.argmax(score >= -1e-9, axis=1)
        none_inside = ~np.any(score >= -1e-9, axis=1)
        pick[none_inside] = np.argmax(score[none_inside], axis=1)
        rows = np.arange(len(w))
        chosen = bary[rows, pick]
        if none_inside.any():
            chosen[none_inside] = np.clip(chosen[none_inside], 0.0, None)
            chosen[none_inside] /= chosen[none_inside].sum(axis=1, keepdims=True)
        return cand[rows, pick], chosen


def geodesic_midpoint(a: complex, b: complex) -> complex:
    ca = a.conjugate()
    bp = (b - a) / (1.0 - ca * b)
    r = abs(bp)
    if r == 0.0:
        return a
    mp = bp / r * math.tanh(math.atanh(r) / 2.0)
    return (mp + a) / (1.0 + ca * mp)


def _hyperbolic_triangle_area(la, lb, lc):
    def angle(opp, s1, s2):
        num = np.cosh(s1) * np.cosh(s2) - np.cosh(opp)
        return np.arccos(np.clip(num / (np.sinh(s1) * np.sinh(s2)), -1.0, 1.0))

    return np.pi - angle(la, lb, lc) - angle(lb, lc, la) - angle(lc, la, lb)


def _euclidean_angles(la, lb, lc):
    """Angles opposite la, lb, lc of the comparison triangle."""
    def ang(opp, s1, s2):
        return np.arccos(np.clip((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2), -1.0, 1.0))

    return ang(la, lb, lc), ang(lb, lc, la), ang(lc, la, lb)


def _subdivide(G: FuchsianGroup, levels: int):
    nodes: List[complex] = [0j] + [p.z for p in G.octagon]
    tris = [(0, 1 + k, 1 + (k + 1) % 8) for k in range(8)]
    # coarse outer edge (v_k, v_k+1) is side k+1
    boundary: Dict[Tuple[int, int], int] = {}
    for k in range(8):
        i, j = 1 + k, 1 + (k + 1) % 8
        boundary[(min(i, j), max(i, j))] = (k + 1) % 8
    for _ in range(levels):
        cache: Dict[Tuple[int, int], int] = {}
        nb: Dict[Tuple[int, int], int] = {}

        def mid(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            idx = cache.get(key)
            if idx is None:
                idx = len(nodes)
                nodes.append(geodesic_midpoint(nodes[i], nodes[j]))
                cache[key] = idx
                side = boundary.get(key)
                if side is not None:
                    nb[(min(key[0], idx), max(key[0], idx))] = side
                    nb[(min(key[1], idx), max(key[1], idx))] = side
            return idx

        out = []
        for i, j, k in tris:
            a, b, c = mid(i, j), mid(j, k), mid(k, i)
            out.extend([(i, a, c), (a, j, b), (c, b, k), (a, b, c)])
        tris = out
        boundary = nb
    side_nodes: Dict[int, set] = {s: set() for s in range(8)}
    for (i, j), s in boundary.items():
        side_nodes[s].update((i, j))
    return np.array(nodes, dtype=complex), np.array(tris, dtype=int), side_nodes


def _identify(G: FuchsianGroup, nodes: np.ndarray, side_nodes: Dict[int, set]):
    links: Dict[int, List[Tuple[int, MobiusIsometry]]] = {}
    for s in range(4, 8):
        letter, partner = G.side_pairing(s)
        g = G.generators[letter]
        targets = sorted(side_nodes[partner])
        tpos = nodes[targets]
        for p in sorted(side_nodes[s]):
            img = complex(g.apply(nodes[p]))
            j = int(np.argmin(np.abs(tpos - img)))
            if abs(tpos[j] - img) > 1e-9:
                raise MeshQualityFailure(f"side {s} node {p} has no partner on side {partner}")
            q = targets[j]
            links.setdefault(p, []).append((q, g))            # g(p) = q
            links.setdefault(q, []).append((p, g.inverse()))  # g^-1(q) = p
    n = nodes.size
    root = np.arange(n)
    iso: Dict[int, MobiusIsometry] = {}
    seen = np.zeros(n, dtype=bool)
    for start in sorted(links):
        if seen[start]:
            continue
        comp = [start]
        seen[start] = True
        local = {start: MobiusIsometry.identity()}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v, g in links.get(u, []):
                if v in local:
                    continue
                local[v] = local[u].compose(g.inverse())  # maps v -> u -> start
                seen[v] = True
                comp.append(v)
                queue.append(v)
        r = min(comp)
        back = local[r].inverse()  # start -> r
        for v in comp:
            root[v] = r
            if v != r:
                iso[v] = back.compose(local[v])
    return root, iso


def build_mesh(G: FuchsianGroup, target_h: float) -> EquivariantMesh:
    if not (0.01 <= target_h <= 0.5):
        raise ValueError(f"target_h={target_h} outside [0.01, 0.5]")
    side = 2.0 * OCTAGON_INRADIUS
    levels = max(1, math.ceil(math.log2(side / target_h)))
    nodes, tris, side_nodes = _subdivide(G, levels)
    root, iso = _identify(G, nodes, side_nodes)

    roots = np.unique(root)
    cid = np.full(nodes.size, -1, dtype=int)
    cid[roots] = np.arange(roots.size)
    canon = cid[root]
    orbit_map = {int(v): (int(root[v]), g) for v, g in iso.items()}

    zi, zj, zk = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    la, lb, lc = disk_dist(zj, zk), disk_dist(zk, zi), disk_dist(zi, zj)
    A, B, C = _euclidean_angles(la, lb, lc)
    min_angle = math.degrees(float(np.min(np.stack([A, B, C]))))
    if min_angle < MIN_ANGLE_DEG:
        raise MeshQualityFailure(f"minimum comparison angle {min_angle:.3f} deg below {MIN_ANGLE_DEG}")

    area = _hyperbolic_triangle_area(la, lb, lc)
    nv = roots.size
    vertex_area = np.zeros(nv)
    for col in range(3):
        np.add.at(vertex_area, canon[tris[:, col]], area / 3.0)

    ci, cj, ck = canon[tris[:, 0]], canon[tris[:, 1]], canon[tris[:, 2]]
    pairs = np.concatenate([np.stack([cj, ck], 1), np.stack([ck, ci], 1), np.stack([ci, cj], 1)])
    lens = np.concatenate([la, lb, lc])
    wts = 0.5 / np.tan(np.concatenate([A, B, C]))
    pairs.sort(axis=1)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.ravel()
    edge_weights = np.bincount(inv, weights=wts, minlength=edges.shape[0])
    edge_lengths = np.zeros(edges.shape[0])
    edge_lengths[inv] = lens

    i, j = edges[:, 0], edges[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([edge_weights, edge_weights, -edge_weights, -edge_weights])
    stiffness = coo_matrix((vals, (rows, cols)), shape=(nv, nv)).tocsr()
    stiffness.sum_duplicates()

    mesh = EquivariantMesh(
        nodes=nodes,
        triangles=tris,
        canon=canon,
        representatives=roots,
        orbit_map=orbit_map,
        edges=edges,
        edge_lengths=edge_lengths,
        edge_weights=edge_weights,
        vertex_area=vertex_area,
        stiffness=stiffness,
        target_h=float(target_h),
        levels=levels,
        group=G,
    )
    logger.info(
        "mesh: levels=%d nodes=%d vertices=%d triangles=%d area=%.9f chi=%d",
        levels, nodes.size, nv, tris.shape[0], float(vertex_area.sum()), mesh.euler_characteristic(),
    )
    return mesh


def laplacian_apply(mesh: EquivariantMesh, f: ScalarField) -> ScalarField:
    v = f.values
    if v.size != mesh.n_vertices:
        raise ValueError("field length does not match mesh")
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    diff = mesh.edge_weights * (v[j] - v[i])
    nv = mesh.n_vertices
    out = np.bincount(i, weights=diff, minlength=nv) - np.bincount(j, weights=diff, minlength=nv)
    return ScalarField(out / mesh.vertex_area)


def integrate(mesh: EquivariantMesh, f: ScalarField) -> float:
    return float(np.dot(f.values, mesh.vertex_area))


def _angle_defects(mesh: EquivariantMesh, E: np.ndarray, F: np.ndarray, G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    tris = mesh.triangles
    z = mesh.nodes

    def seg_len(p, q):
        d = z[q] - z[p]
        e = 0.5 * (E[p] + E[q])
        f = 0.5 * (F[p] + F[q])
        g = 0.5 * (G[p] + G[q])
        return np.sqrt(e * d.real ** 2 + 2.0 * f * d.real * d.imag + g * d.imag ** 2)

    i, j, k = tris[:, 0], tris[:, 1], tris[:, 2]
    la, lb, lc = seg_len(j, k), seg_len(k, i), seg_len(i, j)
    A, B, C = _euclidean_angles(la, lb, lc)
    s = 0.5 * (la + lb + lc)
    area = np.sqrt(np.clip(s * (s - la) * (s - lb) * (s - lc), 0.0, None))
    nv = mesh.n_vertices
    angle_sum = np.zeros(nv)
    varea = np.zeros(nv)
    for col, ang in zip(range(3), (A, B, C)):
        np.add.at(angle_sum, mesh.canon[tris[:, col]], ang)
        np.add.at(varea, mesh.canon[tris[:, col]], area / 3.0)
    return 2.0 * np.pi - angle_sum, varea


def total_angle_defect(mesh: EquivariantMesh, E: np.ndarray, F: np.ndarray, G: np.ndarray) -> float:
    """Sum of vertex angle defects; equals 2*pi*chi for any positive tensor."""
    defect, _ = _angle_defects(mesh, E, F, G)
    return float(np.sum(defect))


def gauss_curvature(mesh: EquivariantMesh, metric) -> ScalarField:
    """Discrete Gaussian curvature of a metric on the mesh.

    Conformal metrics use K = (-1 - 0.5 * Lap_sigma log rho) / rho, with rho the
    invariant ratio of the metric to sigma. Full tensors use angle defect over
    one third of the comparison-triangle areas.
    """
    if metric.kind == "full":
        E, F, G = metric.node_tensor(mesh)
        det = E * G - F * F
        if np.any(E <= 0.0) or np.any(det <= DET_FLOOR):
            raise DegenerateMetric(f"{metric.tag}: metric determinant min {float(det.min()):.3e}")
        defect, varea = _angle_defects(mesh, E, F, G)
        return ScalarField(defect / varea)
    rho = metric.ratio(mesh).values
    if np.any(rho <= DET_FLOOR):
        raise DegenerateMetric(f"{metric.tag}: conformal ratio min {float(rho.min()):.3e}")
    lap = laplacian_apply(mesh, ScalarField(np.log(rho))).values
    return ScalarField((-1.0 - 0.5 * lap) / rho)


def mesh_to_json(mesh: EquivariantMesh) -> Dict:
    return {
        "target_h": mesh.target_h,
        "levels": mesh.levels,
        "vertices": [[float(z.real), float(z.imag)] for z in mesh.nodes],
        "triangles": mesh.triangles.tolist(),
        "orbit_map": {str(k): v[0] for k, v in sorted(mesh.orbit_map.items())},
    }
