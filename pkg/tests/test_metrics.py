import math

import numpy as np
import pytest

from minlag.core.constants import GAUSS_POINTS, SURFACE_AREA
from minlag.core.mesh import gauss_curvature, total_angle_defect
from minlag.core.metrics import (
    CurveClass,
    _axis_path,
    _colour_stride,
    _path_objective,
    curve_list,
    distance_to_axis,
    geodesic_length,
    length_sandwich_check,
    make_metric,
    maximal_curvature_gap,
    pullback_sum_gap,
    shorten,
)
from minlag.core.qdiff import combine, l1_norm
from minlag.core.solver import solve_bochner, solve_maximal
from minlag.errors import DegenerateMetric, ShorteningStalled


@pytest.fixture(scope="module")
def system(basis, mesh):
    raw = combine(basis, (1.0, 0.5 + 0.25j, 0.25 - 0.5j))
    return solve_bochner(mesh, raw.scaled(1.0 / l1_norm(raw, mesh)))


@pytest.fixture(scope="module")
def hyperbolic(mesh):
    return make_metric("hyperbolic", mesh=mesh)


def test_curve_words_are_cyclically_reduced(group):
    c = CurveClass.from_word(group, "Aaba")
    assert c.word == "ba"
    with pytest.raises(ValueError):
        CurveClass.from_word(group, "aA")


def test_hyperbolic_length_is_conjugation_invariant(group):
    ab, ba = curve_list(group, ["ab", "ba"])
    assert ab.hyperbolic_length == pytest.approx(ba.hyperbolic_length, rel=1e-12)


def test_axis_path_closes_up(group):
    T = group.element("ab").matrix
    p = _axis_path(T, 16)
    assert abs(p[-1] - T.apply(p[0])) < 1e-12
    assert np.max(distance_to_axis(p, T)) < 1e-9


@pytest.mark.parametrize("word,rel", [("a", 1e-6), ("ab", 1e-3)])
def test_hyperbolic_shortening_recovers_trace_length(group, hyperbolic, word, rel):
    c = CurveClass.from_word(group, word)
    res = shorten(hyperbolic, c, segments=64)
    assert res.length == pytest.approx(c.hyperbolic_length, rel=rel)
    assert abs(res.path[-1] - c.deck.matrix.apply(res.path[0])) < 1e-12


def test_length_scales_with_metric(group, hyperbolic):
    c = CurveClass.from_word(group, "a")
    base = geodesic_length(hyperbolic, c, segments=32)
    assert geodesic_length(hyperbolic.scaled(4.0), c, segments=32) == pytest.approx(2.0 * base, rel=1e-6)


def test_shorten_needs_three_segments(group, hyperbolic):
    with pytest.raises(ValueError):
        shorten(hyperbolic, CurveClass.from_word(group, "a"), segments=2)


def test_unknown_tag_rejected(mesh):
    with pytest.raises(ValueError):
        make_metric("sol", mesh=mesh)


def test_flat_metric_of_zero_differential(basis, mesh):
    with pytest.raises(DegenerateMetric):
        make_metric("flat", mesh=mesh, q=combine(basis, (0, 0, 0)))


def test_induced_full_is_sum_of_pullbacks(system, mesh):
    assert pullback_sum_gap(system) <= 1e-12
    full = make_metric("induced_full", system=system)
    assert np.array_equal(full.ratio(mesh).values, 2.0 * system.e.values)


@pytest.mark.parametrize("tag", ["pullback_1", "pullback_2"])
def test_pullback_area_is_jacobian_integral(system, mesh, tag):
    assert make_metric(tag, system=system).area(mesh) == pytest.approx(SURFACE_AREA, abs=1e-7)


def test_hyperbolic_area(hyperbolic, mesh):
    assert hyperbolic.area(mesh) == pytest.approx(4 * math.pi, abs=1e-9)


def test_maximal_metric_curvature(system, mesh):
    ms = solve_maximal(mesh, system.q)
    assert maximal_curvature_gap(ms, system) <= 1e-7


def test_length_sandwich(group, system):
    report = length_sandwich_check(system, curve_list(group, ["a"]), segments=32)
    assert report.ok
    row = report.rows[0]
    assert row.pullback_1 <= row.induced_full + 1e-3


def test_distance_to_axis_of_diameter(group):
    T = group.element("a").matrix
    assert distance_to_axis(np.array([0j, 0.3 + 0j]), T) == pytest.approx([0.0, 0.0], abs=1e-12)
    assert distance_to_axis(np.array([0.5j]), T)[0] == pytest.approx(2 * math.atanh(0.5), rel=1e-9)


def test_smooth_flag(hyperbolic, system, mesh):
    assert hyperbolic.smooth
    assert hyperbolic.scaled(2.0).smooth
    assert not make_metric("pullback_1", system=system).smooth
    assert not make_metric("flat", mesh=mesh, q=system.q).smooth


def test_shortening_reports_raw_gradient(group, hyperbolic):
    c = CurveClass.from_word(group, "ab")
    res = shorten(hyperbolic, c, segments=64)
    assert res.certified
    assert res.grad_norm <= 1e-8
    evaluate = _path_objective(hyperbolic, c.deck.matrix, 64, GAUSS_POINTS)
    length, grad = evaluate(np.concatenate([res.path[:-1].real, res.path[:-1].imag]))
    assert length == pytest.approx(res.length, rel=1e-12)
    assert float(np.linalg.norm(grad)) == pytest.approx(res.grad_norm, rel=1e-9)


def test_unreachable_gradient_tolerance_stalls(group, hyperbolic):
    with pytest.raises(ShorteningStalled):
        shorten(hyperbolic, CurveClass.from_word(group, "ab"), segments=32, tol=1e-300)


def test_colour_stride_separates_classes():
    for n in (3, 4, 5, 7, 32, 64, 256, 257):
        c = _colour_stride(n)
        for k in range(c):
            members = list(range(k, n, c))
            gaps = [j - i for i, j in zip(members, members[1:])]
            if len(members) > 1:
                gaps.append(n - members[-1] + members[0])
            assert all(g >= 3 for g in gaps)


def test_length_invariant_under_word_inversion(group, hyperbolic):
    ab, BA = curve_list(group, ["ab", "BA"])
    forward = geodesic_length(hyperbolic, ab, segments=64)
    assert geodesic_length(hyperbolic, BA, segments=64) == pytest.approx(forward, rel=1e-6)


def test_length_invariant_under_cyclic_permutation(group, hyperbolic):
    ab, ba = curve_list(group, ["ab", "ba"])
    assert geodesic_length(hyperbolic, ba, segments=256) == pytest.approx(
        geodesic_length(hyperbolic, ab, segments=256), rel=1e-4
    )


@pytest.mark.parametrize("tag", ["pullback_1", "pullback_2"])
def test_pullback_curvature_is_hyperbolic(system, mesh, tag):
    metric = make_metric(tag, system=system)
    K = gauss_curvature(mesh, metric).values
    assert float(np.median(np.abs(K + 1.0))) <= 3e-2
    assert total_angle_defect(mesh, *metric.node_tensor(mesh)) == pytest.approx(-4 * math.pi, abs=1e-9)
