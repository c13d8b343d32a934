import json
import stat
from dataclasses import dataclass

import numpy as np
import pytest

from minlag.core.export.csv_writer import fmt, render_csv, write_csv
from minlag.core.export.json_writer import dumps, file_sha256, write_json
from minlag.core.export.report_render import write_txt
from minlag.core.io_runtime import ensure_output_dir


@dataclass
class _Check:
    name: str
    claim: str
    value: float
    tolerance: float
    passed: bool


def test_json_is_canonical(tmp_path):
    blob = {"b": np.float64(1.5), "a": [np.int64(2), complex(1, -1)], "c": float("nan"), "d": np.array([1.0, 2.0])}
    data = json.loads(dumps(blob))
    assert data == {"a": [2, [1.0, -1.0]], "b": 1.5, "c": "nan", "d": [1.0, 2.0]}
    assert dumps(blob).endswith(b"\n")
    p1 = write_json(tmp_path / "x.json", blob)
    p2 = write_json(tmp_path / "y.json", dict(reversed(list(blob.items()))))
    assert file_sha256(p1) == file_sha256(p2)


def test_csv_format():
    assert fmt(0.1) == "1.0000000000000001e-01"
    assert fmt(True) == "true"
    assert fmt(3) == "3"
    text = render_csv(("t", "word"), [(1.0, "ab")]).decode("utf-8").splitlines()
    assert text[0] == "# columns: t, word"
    assert text[1] == "t,word"
    assert text[2] == "1.0000000000000000e+00,ab"


def test_csv_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ("a", "b"), [(1,)])


def test_outputs_are_private(tmp_path):
    out = tmp_path / "run" / "x.json"
    write_json(out, {"k": 1})
    assert stat.S_IMODE(out.stat().st_mode) == 0o600
    assert stat.S_IMODE(out.parent.stat().st_mode) == 0o700
    assert ensure_output_dir(tmp_path / "run") == tmp_path / "run"


def test_report_txt_layout(tmp_path):
    p = tmp_path / "report.txt"
    checks = [_Check("area", "gauss-bonnet", 1e-4, 5e-3, True), _Check("dlr", "flat-current-length", 2e-3, 1e-3, False)]
    write_txt(p, {"command": "sweep", "sweep_sha256": "abc", "complete": True}, checks, {"ENERGY": ["t=1 E=1"], "LENGTHS": []}, "a note")
    s = p.read_text(encoding="utf-8")
    assert s.startswith("minlag v")
    assert "Checks: 2" in s and "Failed: 1" in s
    assert "PASS area [gauss-bonnet]" in s and "FAIL dlr [flat-current-length]" in s
    assert "ENERGY\nt=1 E=1" in s
    assert "LENGTHS" not in s
    assert s.rstrip().endswith("NOTES\na note")
