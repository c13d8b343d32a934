import math

import numpy as np
import pytest

from minlag.core.hyperbolic import DiskPoint
from minlag.core.metrics import curve_list, make_metric
from minlag.core.qdiff import combine, find_zeros, flat_distance_to_zeros, flat_straight_path, l1_norm
from minlag.core.solver import solve_bochner
from minlag.core.spectrum import (
    compute_spectrum,
    core_distance,
    dlr_length,
    flat_distance,
    intersection_number,
    intersection_table,
    second_fundamental_form,
    second_fundamental_form_from_jet,
)
from minlag.errors import BudgetExceeded, NearZeroDenominator


@pytest.fixture(scope="module")
def q0(basis, mesh):
    raw = combine(basis, (1.0, 0.5 + 0.25j, 0.25 - 0.5j))
    return raw.scaled(1.0 / l1_norm(raw, mesh))


@pytest.fixture(scope="module")
def anchor(q0, mesh):
    d = flat_distance_to_zeros(q0, mesh.positions, find_zeros(q0, mesh))
    return complex(mesh.positions[int(np.argmax(d))])


def test_generator_curves_cross_once_at_centre(group):
    a, b, c, d = curve_list(group, "abcd")
    assert intersection_number(group, a, a) == 0
    for x, y in [(a, b), (a, c), (b, d), (c, d)]:
        assert intersection_number(group, x, y) == 1
        assert intersection_number(group, y, x) == 1


def test_intersection_budget(group):
    a, b = curve_list(group, "ab")
    with pytest.raises(BudgetExceeded):
        intersection_number(group, a, b, cap=10)


def test_intersection_table_is_upper_triangle(group):
    rows = intersection_table(group, curve_list(group, ["a", "b", "ab"]))
    assert [(r[0], r[1]) for r in rows] == [("a", "a"), ("a", "b"), ("a", "ab"), ("b", "b"), ("b", "ab"), ("ab", "ab")]


def test_dlr_length_of_straight_flat_path(q0, anchor):
    path = flat_straight_path(q0, anchor, 0.2 + 0.1j)
    assert dlr_length(q0, path) == pytest.approx(abs(0.2 + 0.1j), rel=2e-3)


def test_core_distance_matches_flat_distance(q0, anchor):
    p1 = DiskPoint.from_complex(anchor)
    p2 = DiskPoint.from_complex(anchor + 0.02 * (1.0 - abs(anchor) ** 2) * complex(math.cos(0.4), math.sin(0.4)))
    assert core_distance(q0, p1, p2) == pytest.approx(flat_distance(q0, p1, p2), rel=1e-4)
    assert core_distance(q0, p1, p1) == 0.0


def test_jet_of_flat_differential_is_zero():
    form = second_fundamental_form_from_jet(4.0, 0.3, -0.2, 0j, 0j)
    assert form.components == (0.0,) * 6


def test_jet_is_trace_free():
    form = second_fundamental_form_from_jet(5.0, 0.3, -0.2, 0.4 + 0.3j, 0.1 - 0.7j)
    assert form.trace == pytest.approx((0.0, 0.0), abs=1e-12)
    assert form.II22 == pytest.approx(tuple(-v for v in form.II11))


def test_jet_degenerate_denominator():
    with pytest.raises(NearZeroDenominator):
        second_fundamental_form_from_jet(1.0, 0.0, 0.0, 0.5 + 0j, 0j)


def test_second_fundamental_form_vanishes_for_trivial_system(basis, mesh):
    sys = solve_bochner(mesh, combine(basis, (0, 0, 0)))
    for node in mesh.representatives[:10]:
        assert max(abs(v) for v in second_fundamental_form(sys, int(node)).components) == 0.0


def test_second_fundamental_form_at_chart_point(basis, mesh, q0):
    sys = solve_bochner(mesh, q0)
    form = second_fundamental_form(sys, DiskPoint(0.05, 0.02))
    assert all(math.isfinite(v) for v in form.components)


def test_compute_spectrum_rows_and_threads(group, mesh):
    metrics = [make_metric("hyperbolic", mesh=mesh)]
    curves = curve_list(group, ["a", "b"])
    one = compute_spectrum(metrics, curves, threads=1, segments=32)
    two = compute_spectrum(metrics, curves, threads=2, segments=32)
    assert [r.curve_word for r in one.rows] == ["a", "b"]
    assert one.lengths() == two.lengths()
    assert one.length("hyperbolic", "a") == pytest.approx(curves[0].hyperbolic_length, rel=1e-6)
    with pytest.raises(KeyError):
        one.length("flat", "a")


def test_intersection_of_powers_is_bilinear(group):
    a, aa, bb = curve_list(group, ["a", "aa", "bb"])
    assert intersection_number(group, a, bb) == 2
    assert intersection_number(group, bb, a) == 2
    assert intersection_number(group, aa, bb) == 4
    assert intersection_number(group, bb, bb) == 0


def test_intersections_beyond_generator_pairs(group):
    a, ab, cd, comm = curve_list(group, ["a", "ab", "cd", "abAB"])
    assert intersection_number(group, a, comm) == 0
    assert intersection_number(group, comm, comm) == 0
    assert intersection_number(group, ab, ab) == 0
    assert intersection_number(group, ab, cd) == intersection_number(group, cd, ab) == 4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_jet_components_follow_closed_form(seed):
    rng = np.random.default_rng(seed)
    S = 3.0 + float(rng.random())
    Sx, Sy = (float(v) for v in rng.normal(size=2))
    f = complex(*(0.3 * rng.normal(size=2)))
    fp = complex(*rng.normal(size=2))
    form = second_fundamental_form_from_jet(S, Sx, Sy, f, fp)
    X, Y, Xx, Yx = f.real, f.imag, fp.real, fp.imag
    D = S * math.sqrt(2.0 * S * (S * S - 4.0 * abs(f) ** 2))
    assert form.II22 == pytest.approx(((X * Sy + S * Yx - Y * Sx) / D, (-Y * Sy + S * Xx - X * Sx) / D), rel=1e-12)
    assert form.trace == pytest.approx((0.0, 0.0), abs=1e-12)
