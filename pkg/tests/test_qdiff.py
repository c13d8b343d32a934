import math

import numpy as np
import pytest

from minlag.core.hyperbolic import DiskPoint
from minlag.core.qdiff import (
    build_series_basis,
    combine,
    evaluate,
    find_zeros,
    flat_distance_to_zeros,
    flat_path_length,
    flat_straight_path,
    foliation_measure,
    gauss_rule,
    gram_matrix,
    l1_norm,
    poincare_series,
    zeta_increment,
)
from minlag.errors import TruncationInsufficient

COEFFS = (1.0, 0.5 + 0.25j, 0.25 - 0.5j)


@pytest.fixture(scope="module")
def q0(basis, mesh):
    raw = combine(basis, COEFFS)
    return raw.scaled(1.0 / l1_norm(raw, mesh))


@pytest.fixture(scope="module")
def zeros(q0, mesh):
    return find_zeros(q0, mesh)


@pytest.fixture(scope="module")
def anchor(q0, mesh, zeros):
    d = flat_distance_to_zeros(q0, mesh.positions, zeros)
    return complex(mesh.positions[int(np.argmax(d))])


def test_gauss_rule_integrates_polynomials():
    x, w = gauss_rule(8)
    assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-14)
    assert float(np.sum(w * x ** 5)) == pytest.approx(1.0 / 6.0, abs=1e-14)


def test_transformation_law(group, q0):
    z = np.array([0.1 + 0.2j, -0.3 + 0.05j, 0.4 - 0.1j])
    base = q0.values(z)
    for g in group.generators.values():
        moved = q0.values(g.apply(z)) * g.derivative(z) ** 2
        assert np.max(np.abs(moved - base)) <= 1e-9 * np.max(np.abs(base))


def test_modulus_is_phase_invariant(q0):
    z = np.array([0.1 + 0.2j, -0.5 + 0.1j])
    assert np.array_equal(q0.rotated(1.3).modulus(z), q0.modulus(z))
    assert abs(evaluate(q0.rotated(math.pi), DiskPoint(0.1, 0.2)) + evaluate(q0, 0.1 + 0.2j)) < 1e-12


def test_l1_norm_is_linear_in_scale(q0, mesh):
    assert l1_norm(q0, mesh) == pytest.approx(1.0, rel=1e-12)
    assert l1_norm(q0.scaled(3.0), mesh) == pytest.approx(3.0, rel=1e-12)


def test_odd_exponent_series_vanishes(group):
    theta = poincare_series(group, 1, 5.0, tolerance=1.0)
    z = np.array([0.1 + 0.2j, -0.3 + 0.05j])
    assert np.max(np.abs(theta.raw(z))) < 1e-6


def test_truncation_too_short_raises(group):
    with pytest.raises(TruncationInsufficient):
        poincare_series(group, 0, 2.0, tolerance=1e-8)


def test_gram_matrix_is_hermitian_positive(basis, mesh):
    M = gram_matrix(basis, mesh)
    assert np.allclose(M, M.conj().T, atol=1e-12 * np.abs(M).max())
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_zero_multiplicities_sum_to_four(zeros):
    assert sum(m for _, m in zeros) == 4
    assert all(m >= 1 for _, m in zeros)


def test_zero_differential_has_no_zeros(basis, mesh):
    with pytest.raises(ValueError):
        find_zeros(combine(basis, (0, 0, 0)), mesh)


def test_flat_distance_to_zeros_vanishes_at_zero(q0, zeros):
    z = np.array([zeros[0][0].z])
    assert flat_distance_to_zeros(q0, z, zeros)[0] < 1e-9


def test_flat_straight_path_moves_natural_coordinate(q0, anchor):
    path = flat_straight_path(q0, anchor, 0.3 + 0.0j)
    assert flat_path_length(q0, path) == pytest.approx(0.3, rel=1e-4)
    assert foliation_measure(q0, path, 0.0).value == pytest.approx(0.3, rel=1e-4)
    assert foliation_measure(q0, path, math.pi / 2).value < 1e-4


def test_zeta_increment_matches_straight_path(q0, anchor):
    path = flat_straight_path(q0, anchor, 0.05j, steps=128)
    assert abs(zeta_increment(q0, path[0], path[-1]) - 0.05j) < 5e-4


def test_series_residual_falls_with_cutoff(group, basis):
    short = build_series_basis(group, 4.0, tolerance=math.inf)
    assert basis.relative_residuals().max() < short.relative_residuals().max()


def test_foliation_measure_is_pi_periodic_and_additive(q0, anchor):
    path = flat_straight_path(q0, anchor, 0.2 + 0.15j, steps=64)
    for theta in (0.0, 0.7, 2.1):
        whole = foliation_measure(q0, path, theta).value
        assert foliation_measure(q0, path, theta + math.pi).value == pytest.approx(whole, rel=1e-12)
        head = foliation_measure(q0, path[:33], theta).value
        tail = foliation_measure(q0, path[32:], theta).value
        assert head + tail == pytest.approx(whole, rel=1e-12)
