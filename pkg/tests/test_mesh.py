import math

import numpy as np
import pytest

from minlag.core.constants import SURFACE_AREA
from minlag.core.hyperbolic import sigma
from minlag.core.mesh import (
    ScalarField,
    build_mesh,
    gauss_curvature,
    integrate,
    laplacian_apply,
    mesh_to_json,
    total_angle_defect,
)
from minlag.core.metrics import make_metric


def test_mesh_topology(mesh):
    assert mesh.euler_characteristic() == -2
    assert mesh.canon.max() + 1 == mesh.n_vertices


def test_vertex_areas_sum_to_surface_area(mesh):
    assert float(mesh.vertex_area.sum()) == pytest.approx(SURFACE_AREA, abs=1e-9)
    assert np.all(mesh.vertex_area > 0)


def test_octagon_corners_are_one_vertex(group, mesh):
    corners = [int(np.argmin(np.abs(mesh.nodes - p.z))) for p in group.octagon]
    assert len({int(mesh.canon[c]) for c in corners}) == 1


def test_identified_nodes_are_equidistant_from_centre(mesh):
    for v, (root, _) in mesh.orbit_map.items():
        assert abs(mesh.nodes[v]) == pytest.approx(abs(mesh.nodes[root]), abs=1e-12)


def test_stiffness_is_symmetric_negative_semidefinite(mesh):
    S = mesh.stiffness
    assert abs(S - S.T).max() < 1e-12
    assert np.allclose(np.asarray(S.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    assert np.all(S.diagonal() < 0)


def test_laplacian_of_constant_and_integral(mesh):
    ones = ScalarField(np.ones(mesh.n_vertices))
    assert np.max(np.abs(laplacian_apply(mesh, ones).values)) < 1e-12
    rng = np.random.default_rng(3)
    f = ScalarField(rng.normal(size=mesh.n_vertices))
    assert integrate(mesh, laplacian_apply(mesh, f)) == pytest.approx(0.0, abs=1e-9)


def test_hyperbolic_curvature_and_angle_defect(mesh):
    hyp = make_metric("hyperbolic", mesh=mesh)
    K = gauss_curvature(mesh, hyp).values
    assert np.max(np.abs(K + 1.0)) < 1e-12
    s = sigma(mesh.nodes)
    assert total_angle_defect(mesh, s, np.zeros_like(s), s) == pytest.approx(-4 * math.pi, abs=1e-9)


def test_build_mesh_rejects_bad_target(group):
    with pytest.raises(ValueError):
        build_mesh(group, 0.001)


def test_scalar_field_validation():
    with pytest.raises(ValueError):
        ScalarField(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        ScalarField(np.ones((2, 2)))


def test_mesh_json_shape(mesh):
    blob = mesh_to_json(mesh)
    assert len(blob["vertices"]) == mesh.nodes.size
    assert len(blob["triangles"]) == mesh.triangles.shape[0]


def test_laplacian_is_self_adjoint(mesh):
    rng = np.random.default_rng(5)
    f = ScalarField(rng.normal(size=mesh.n_vertices))
    g = ScalarField(rng.normal(size=mesh.n_vertices))
    lhs = integrate(mesh, ScalarField(laplacian_apply(mesh, f).values * g.values))
    rhs = integrate(mesh, ScalarField(f.values * laplacian_apply(mesh, g).values))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-9)
    assert integrate(mesh, ScalarField(laplacian_apply(mesh, f).values * f.values)) < 0.0
