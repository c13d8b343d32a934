import math

import numpy as np
import pytest

from minlag.core.constants import OCTAGON_INRADIUS
from minlag.core.hyperbolic import (
    DiskPoint,
    MobiusIsometry,
    axis_point,
    cyclically_reduce,
    dist,
    displacement,
    displacement_ball,
    group_ball,
    invert_word,
    reduce_to_domain,
    translation_length,
)
from minlag.errors import BudgetExceeded, EllipticOrParabolic


def test_octagon_inradius_constant():
    assert OCTAGON_INRADIUS == pytest.approx(1.528571, abs=1e-6)


def test_generator_translation_length(group):
    for ch in "abcd":
        assert translation_length(group.element(ch)) == pytest.approx(2 * math.acosh(1 + math.sqrt(2)), rel=1e-12)


def test_relation_is_identity(group):
    assert group.relation_product().close_to(MobiusIsometry.identity(), tol=1e-9)


def test_generators_pair_opposite_sides(group):
    for k in range(4):
        g = group.generators["abcd"[k]]
        # side k+4 midpoint goes to side k midpoint
        moved = g.apply(group.side_midpoints[k + 4].z)
        assert abs(moved - group.side_midpoints[k].z) < 1e-12


def test_compose_and_inverse():
    g = MobiusIsometry.translation(1.3, 0.4)
    h = MobiusIsometry.rotation(0.9)
    z = 0.2 + 0.1j
    assert abs(g.compose(h).apply(z) - g.apply(h.apply(z))) < 1e-12
    assert g.compose(g.inverse()).close_to(MobiusIsometry.identity())


def test_isometry_preserves_distance():
    g = MobiusIsometry.translation(2.0, 1.1)
    p, q = 0.3 - 0.2j, -0.1 + 0.5j
    assert dist(g.apply(p), g.apply(q)) == pytest.approx(dist(p, q), rel=1e-10)


def test_disk_point_rejects_outside():
    with pytest.raises(ValueError):
        DiskPoint(1.0, 0.0)
    with pytest.raises(ValueError):
        DiskPoint(float("nan"), 0.0)


def test_rotation_is_not_hyperbolic():
    with pytest.raises(EllipticOrParabolic):
        translation_length(MobiusIsometry.rotation(0.5))


@pytest.mark.parametrize("word,expected", [("aA", ""), ("abBc", "ac"), ("Aba", "b"), ("abAB", "abAB")])
def test_cyclic_reduction(word, expected):
    assert cyclically_reduce(word) == expected


def test_invert_word():
    assert invert_word("abC") == "cBA"


def test_group_ball_sizes(group):
    assert len(group_ball(group, 0)) == 1
    assert len(group_ball(group, 1)) == 9


def test_group_ball_budget(group):
    with pytest.raises(BudgetExceeded):
        group_ball(group, 4, cap=100)


def test_displacement_ball_contents(group):
    ball = displacement_ball(group, 3.1)
    assert all(displacement(g) <= 3.1 + 1e-12 for g in ball)
    words = {g.word for g in ball}
    assert {"", "a", "A", "d", "D"} <= words


def test_reduce_to_domain_lands_in_octagon(group):
    g = group.element("abC").matrix
    z = g.apply(0.1 + 0.05j)
    w, dw = reduce_to_domain(group, np.array([z]))
    assert abs(w[0] - (0.1 + 0.05j)) < 1e-9
    assert abs(dw[0]) == pytest.approx(abs(g.inverse().derivative(z)), rel=1e-9)


def test_axis_point_lies_on_axis(group):
    g = group.element("ab").matrix
    p = axis_point(g)
    assert dist(p, g.apply(p)) == pytest.approx(translation_length(g), rel=1e-9)
