import json

import pytest

from minlag.core.constants import STANDARD_CURVES
from minlag.errors import ConfigError
from minlag.settings import config_from_mapping, load_config


def test_packaged_defaults_load():
    cfg = load_config()
    assert cfg.basis == (1 + 0j, 0.5 + 0.25j, 0.25 - 0.5j)
    assert cfg.t_grid == (1.0, 4.0, 16.0, 64.0)
    assert cfg.curves == STANDARD_CURVES
    assert cfg.threads == 1
    assert cfg.tol("geometry_length") == 1e-4


def test_file_overrides_defaults(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"target_h": 0.1, "tolerances": {"dlr": 2e-3}}), encoding="utf-8")
    cfg = load_config(p)
    assert cfg.target_h == 0.1
    assert cfg.tol("dlr") == 2e-3
    assert cfg.tol("area") == 5e-3


def test_with_overrides_skips_none():
    cfg = load_config().with_overrides(out_dir=None, threads=4)
    assert cfg.out_dir == "out"
    assert cfg.threads == 4


def test_unknown_tolerance():
    with pytest.raises(ConfigError):
        load_config().tol("nope")


@pytest.mark.parametrize(
    "patch",
    [
        {"basis": [[1, 0], [0, 0]]},
        {"basis": [[0, 0], [0, 0], [0, 0]]},
        {"basis": "abc"},
        {"t_grid": [1, 1, 2]},
        {"t_grid": [-1, 2]},
        {"curves": ["aA"]},
        {"curves": ["ax"]},
        {"target_h": 2.0},
        {"threads": 0},
        {"word_length": "long"},
        {"tolerances": {"area": -1}},
    ],
)
def test_invalid_configs_rejected(patch):
    with pytest.raises(ConfigError):
        config_from_mapping(patch)


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(arr)


def test_to_json_round_trips():
    cfg = load_config()
    assert config_from_mapping(cfg.to_json()) == cfg


def test_only_domination_slack_may_be_negative():
    assert config_from_mapping({"tolerances": {"domination_slack": -1.0}}).tol("domination_slack") == -1.0
    with pytest.raises(ConfigError):
        config_from_mapping({"tolerances": {"dlr": True}})
