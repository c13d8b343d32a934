import json

import pytest

from minlag import cli
from minlag.errors import NewtonDivergence


@pytest.fixture
def coarse_config(tmp_path):
    p = tmp_path / "coarse.json"
    p.write_text(
        json.dumps({"target_h": 0.2, "word_length": 7.0, "series_tolerance": 5e-2, "t_grid": [1, 4], "curves": ["a"], "segments": 32}),
        encoding="utf-8",
    )
    return str(p)


def test_no_command_prints_help(capsys):
    assert cli.main([]) == 0
    assert "usage: minlag" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"t_grid": [2, 1]}), encoding="utf-8")
    assert cli.main(["build-surface", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "CONFIG ERROR" in capsys.readouterr().out


def test_build_surface_writes_json(coarse_config, tmp_path):
    out = tmp_path / "surface"
    assert cli.main(["build-surface", "--config", coarse_config, "--out", str(out)]) == 0
    blob = json.loads((out / "surface.json").read_text(encoding="utf-8"))
    assert blob["group"]["relation"] == "bCdaBcDA"
    assert blob["series"]["exponents"] == [0, 2, 4]


def test_solve_writes_json(coarse_config, tmp_path):
    out = tmp_path / "solve"
    assert cli.main(["solve", "--config", coarse_config, "--out", str(out), "--t", "2"]) == 0
    blob = json.loads((out / "solve_t2.json").read_text(encoding="utf-8"))
    assert blob["t"] == 2.0
    assert blob["l1_norm"] == pytest.approx(2.0, rel=1e-12)
    assert blob["min_J"] > 0


def test_numerical_abort_exit_code(coarse_config, tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NewtonDivergence("forced")

    monkeypatch.setattr(cli, "solve_bochner", boom)
    assert cli.main(["solve", "--config", coarse_config, "--out", str(tmp_path / "x")]) == 3
    assert "NewtonDivergence" in capsys.readouterr().out


def test_verify_subset_prints_json(coarse_config, tmp_path, capsys):
    code = cli.main(["verify", "--config", coarse_config, "--only", "C14", "--json"])
    data = json.loads(capsys.readouterr().out)
    assert list(data["criteria"]) == ["C14"]
    assert code == (0 if data["overall"] == "PASS" else 1)
    assert "2H" in data["note"]
