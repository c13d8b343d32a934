import math

import numpy as np
import pytest

from minlag.core.constants import SURFACE_AREA
from minlag.core.qdiff import combine, find_zeros, l1_norm
from minlag.core import solver
from minlag.core.solver import (
    chart_identity_gap,
    energy_identity,
    energy_l1_bounds,
    jacobian_integral,
    maximal_domination_check,
    minsky_bound_check,
    minsky_radius_bound,
    solve_bochner,
    solve_maximal,
    subharmonicity_check,
    system_to_json,
)
from minlag.errors import NewtonDivergence


@pytest.fixture(scope="module")
def q(basis, mesh):
    raw = combine(basis, (1.0, 0.5 + 0.25j, 0.25 - 0.5j))
    return raw.scaled(2.0 / l1_norm(raw, mesh))


@pytest.fixture(scope="module")
def system(mesh, q):
    return solve_bochner(mesh, q)


def test_trivial_differential_gives_zero_solution(basis, mesh):
    sys = solve_bochner(mesh, combine(basis, (0, 0, 0)))
    assert np.max(np.abs(sys.w.values)) <= 1e-10
    assert sys.energy == pytest.approx(SURFACE_AREA, abs=1e-9)
    assert sys.iterations == 0


def test_solution_is_nondegenerate(system):
    assert system.min_J > 0.0
    assert system.residual <= 1e-10
    assert np.all(system.nu.values < 1.0)


def test_jacobian_integrates_to_area(system, mesh):
    assert jacobian_integral(system, mesh) == pytest.approx(SURFACE_AREA, abs=1e-7)


def test_corrected_energy_identity(system, mesh):
    assert energy_identity(system, mesh)["gap"] <= 1e-7


def test_energy_l1_bounds(system, mesh, q):
    b = energy_l1_bounds(system.energy, l1_norm(q, mesh))
    assert b["lower"] <= b["two_l1"] + 1e-9
    assert b["two_l1"] <= b["upper"] + 1e-9
    assert b["deficit"] <= 1e-9


def test_chart_identity(system, mesh):
    assert chart_identity_gap(system, mesh) <= 1e-8


def test_phase_invariance_is_bitwise(mesh, q):
    a = solve_bochner(mesh, q).w.values
    b = solve_bochner(mesh, q.rotated(0.7)).w.values
    assert np.array_equal(a, b)


def test_newton_budget_exhausted(mesh, q):
    with pytest.raises(NewtonDivergence):
        solve_bochner(mesh, q.scaled(10.0), max_iter=1)


def test_failed_line_search_raises_above_tolerance(mesh, q, monkeypatch):
    monkeypatch.setattr(solver, "_line_search", lambda *args: None)
    with pytest.raises(NewtonDivergence, match="line search failed"):
        solve_bochner(mesh, q)
    with pytest.raises(NewtonDivergence):
        solve_maximal(mesh, q)


def test_returned_residual_meets_tolerance(mesh, q):
    for tol in (1e-6, 1e-10):
        assert solve_bochner(mesh, q, tol=tol).residual <= tol


def test_maximal_matches_half_of_w(system, mesh, q):
    ms = solve_maximal(mesh, q)
    assert np.max(np.abs(ms.u.values - 0.5 * system.w.values)) <= 1e-9
    assert maximal_domination_check(ms, mesh) >= 1.0 - 1e-9


def test_minsky_bound(system, mesh, q):
    report = minsky_bound_check(system, q, mesh, samples=50)
    assert report.checked > 0
    assert report.ok
    assert minsky_radius_bound(1.0) == pytest.approx(math.asinh(2.0))


def test_subharmonicity_away_from_zeros(system, mesh, q):
    zeros = find_zeros(q, mesh)
    assert subharmonicity_check(system, mesh, zeros, exclusion=0.3) > -1e-2


def test_system_json_keys(system, mesh):
    blob = system_to_json(system, mesh, t=2.0)
    assert set(blob) == {"t", "energy", "l1_norm", "residual", "newton_iters", "min_J", "checks"}
    assert blob["l1_norm"] == pytest.approx(2.0, rel=1e-12)
