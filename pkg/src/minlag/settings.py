from __future__ import annotations

import json
import pkgutil
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib.resources import files as ir_files
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from minlag.core.hyperbolic import cyclically_reduce
from minlag.errors import ConfigError

_DEFAULT_TOLERANCES = {
    "geometry_length": 1e-4,
    "area": 5e-3,
    "jacobian_integral": 1e-2,
    "trivial_w": 1e-10,
    "curvature": 3e-2,
    "chart_identity": 1e-8,
    "energy_bounds": 1e-2,
    "ray_sup": 5e-2,
    "ray_lengths": 5e-2,
    "sandwich_slack": 1e-3,
    "stretch": 5e-2,
    "minsky_slack": 5e-2,
    "dlr": 1e-3,
    "core_distance": 1e-4,
    "maximal_u": 1e-9,
    "maximal_curvature": 2e-2,
    "energy_identity": 1e-2,
    "monotone_slack": 1e-3,
    "domination_slack": 0.0,
}

# a negative slack turns the domination check into a forced failure
_SIGNED_TOLERANCES = frozenset({"domination_slack"})


def _read_defaults_bytes() -> bytes:
    """
    Resolve minlag/config/defaults.json:
      - installed package via importlib.resources
      - pkgutil.get_data fallback
      - dev-tree fallbacks
    """
    try:
        return (ir_files("minlag") / "config" / "defaults.json").read_bytes()
    except Exception:
        pass

    try:
        data = pkgutil.get_data("minlag", "config/defaults.json")
        if data:
            return data
    except Exception:
        pass

    guesses = [
        Path(__file__).parent / "config" / "defaults.json",
        Path.cwd() / "src" / "minlag" / "config" / "defaults.json",
    ]
    for g in guesses:
        if g.exists():
            return g.read_bytes()

    raise ConfigError("defaults.json not bundled; package-data must include config/*.json")


@lru_cache(maxsize=1)
def _default_payload() -> dict:
    return json.loads(_read_defaults_bytes().decode("utf-8"))


@dataclass(frozen=True)
class ExperimentConfig:
    target_h: float
    basis: Tuple[complex, ...]
    t_grid: Tuple[float, ...]
    curves: Tuple[str, ...]
    word_length: float
    quadrature_n: int
    segments: int
    zero_exclusion: float
    ball_cap: int
    series_tolerance: float
    tolerances: Mapping[str, float] = field(default_factory=dict)
    out_dir: str = "out"
    threads: int = 1
    seed: int = 0

    def tol(self, name: str) -> float:
        try:
            return float(self.tolerances[name])
        except KeyError:
            raise ConfigError(f"unknown tolerance {name!r}") from None

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = self.to_json()
        for k, v in kw.items():
            if v is not None:
                data[k] = v
        return config_from_mapping(data)

    def to_json(self) -> dict:
        d = asdict(self)
        d["basis"] = [[c.real, c.imag] for c in self.basis]
        d["t_grid"] = list(self.t_grid)
        d["curves"] = list(self.curves)
        d["tolerances"] = dict(sorted(self.tolerances.items()))
        return d


def _number(data: Mapping, key: str, lo: Optional[float] = None, hi: Optional[float] = None) -> float:
    try:
        v = float(data[key])
    except KeyError:
        raise ConfigError(f"missing key {key!r}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {data[key]!r}") from None
    if lo is not None and v < lo or hi is not None and v > hi:
        raise ConfigError(f"{key}={v} outside [{lo}, {hi}]")
    return v


def config_from_mapping(data: Mapping) -> ExperimentConfig:
    base = _default_payload()
    merged: Dict = {**base, **dict(data)}
    tolerances = {**_DEFAULT_TOLERANCES, **base.get("tolerances", {}), **dict(data.get("tolerances", {}) or {})}

    raw_basis = merged.get("basis")
    try:
        basis = tuple(complex(float(re), float(im)) for re, im in raw_basis)
    except (TypeError, ValueError):
        raise ConfigError("basis must be a list of [re, im] pairs") from None
    if len(basis) != 3:
        raise ConfigError(f"basis needs 3 coefficients, got {len(basis)}")
    if all(c == 0 for c in basis):
        raise ConfigError("basis coefficients are all zero")

    try:
        t_grid = tuple(float(t) for t in merged.get("t_grid", ()))
    except (TypeError, ValueError):
        raise ConfigError("t_grid must be a list of numbers") from None
    if any(t <= 0 for t in t_grid):
        raise ConfigError("t_grid entries must be positive")
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ConfigError("t_grid must be strictly increasing")

    curves = tuple(str(w) for w in merged.get("curves", ()))
    for w in curves:
        if not w or any(ch not in "abcdABCD" for ch in w) or not cyclically_reduce(w):
            raise ConfigError(f"curve word {w!r} is not a non-trivial word in a, b, c, d")

    for k, v in tolerances.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"tolerance {k} must be a number")
        if v < 0 and k not in _SIGNED_TOLERANCES:
            raise ConfigError(f"tolerance {k} must be non-negative")

    return ExperimentConfig(
        target_h=_number(merged, "target_h", 0.01, 0.5),
        basis=basis,
        t_grid=t_grid,
        curves=curves,
        word_length=_number(merged, "word_length", 1.0, 40.0),
        quadrature_n=int(_number(merged, "quadrature_n", 2, 4096)),
        segments=int(_number(merged, "segments", 3, 100_000)),
        zero_exclusion=_number(merged, "zero_exclusion", 0.0),
        ball_cap=int(_number(merged, "ball_cap", 1)),
        series_tolerance=_number(merged, "series_tolerance", 0.0),
        tolerances=tolerances,
        out_dir=str(merged.get("out_dir", "out")),
        threads=int(_number(merged, "threads", 1, 256)),
        seed=int(_number(merged, "seed", 0)),
    )


def load_config(path: Optional[str | Path] = None) -> ExperimentConfig:
    """Packaged defaults, overlaid by the JSON file at `path` when given."""
    if path is None:
        return config_from_mapping({})
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_mapping(data)
