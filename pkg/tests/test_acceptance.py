from minlag.core.constants import ENERGY_IDENTITY_NOTE
from minlag.errors import NewtonDivergence
from minlag.tools import acceptance
from minlag.tools.acceptance import CRITERIA, run_acceptance_suite


def test_criteria_are_ordered_and_complete():
    ids = [c[0] for c in CRITERIA]
    assert ids == [f"C{k:02d}" for k in range(1, 17)]
    assert all(c[2] for c in CRITERIA)


def test_subset_passes(small_config):
    report = run_acceptance_suite(small_config, only=["C02", "C14"])
    assert [r.cid for r in report.results] == ["C02", "C14"]
    assert report.passed, report.to_json()
    assert report.to_json()["overall"] == "PASS"
    assert report.note == ENERGY_IDENTITY_NOTE


def test_negative_domination_slack_fails_chart_check(small_config):
    cfg = small_config.with_overrides(tolerances={"domination_slack": -1.0})
    report = run_acceptance_suite(cfg, only=["C05"])
    assert not report.passed
    assert report.failed == ["C05"]


def test_raising_criterion_is_recorded_as_failure(small_config, monkeypatch):
    def boom(*args, **kwargs):
        raise NewtonDivergence("forced")

    monkeypatch.setattr(acceptance, "solve_bochner", boom)
    report = run_acceptance_suite(small_config, only=["C14"])
    result = report.results[0]
    assert not result.passed
    assert "NewtonDivergence" in result.detail["error"]


def test_verdict_lines(small_config, capsys):
    report = run_acceptance_suite(small_config, only=["C14"])
    acceptance.print_verdict(report)
    out = capsys.readouterr().out
    assert "C14 phase invariance:" in out
    assert "ACCEPTANCE:" in out


def test_negative_control_flips_only_chart_check(small_config):
    base = run_acceptance_suite(small_config)
    flipped = run_acceptance_suite(small_config.with_overrides(tolerances={"domination_slack": -1.0}))
    assert [r.cid for r in flipped.results] == [c[0] for c in CRITERIA]
    assert "C05" not in base.failed
    assert set(flipped.failed) - set(base.failed) == {"C05"}
    assert set(base.failed) <= set(flipped.failed)
