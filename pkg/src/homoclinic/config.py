"""Run configuration: a YAML document with documented defaults.

::

    problem: {name: paper-example, a: 3.0, N: 1}
    grid: {T: 12.0, n: 2399}
    solver: {tol: 1.0e-6, seed: 0, ...}      # see SolverConfig
    check: {T_check: 50.0, samples: 2048, W4_tol: 1.0e-4}
    verify: {residual_inf: 1.0e-4, tail: 1.0e-5, drift: 1.0e-3}
    output: {dir: out}
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional

import yaml

from .discretization import Grid
from .minimax import SolverConfig
from .problem import SamplingPlan
from .verify import VerifyThresholds


class ConfigError(ValueError):
    pass


PROBLEM_PARAMS = {
    "paper-example": {"a": (float, 3.0), "N": (int, 1)},
    "harmonic-oscillator": {"N": (int, 1), "m": (float, None)},
}

# fields that must be strictly positive (non-negative: seed, extra_starts)
_NONNEG = {"seed", "extra_starts", "threads"}


@dataclass
class CheckConfig:
    T_check: float = 50.0
    samples: int = 2048
    W4_tol: float = 1e-4

    def plan(self) -> SamplingPlan:
        return SamplingPlan(self.T_check, self.samples)


@dataclass
class RunConfig:
    problem: str = "paper-example"
    problem_params: Dict[str, Any] = field(default_factory=lambda: {"a": 3.0, "N": 1})
    T: float = 12.0
    n: int = 2399
    solver: SolverConfig = field(default_factory=SolverConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    verify: VerifyThresholds = field(default_factory=VerifyThresholds)
    output_dir: str = "out"

    def grid(self) -> Grid:
        return Grid(self.T, self.n, int(self.problem_params.get("N", 1)))

    def make_problem(self):
        from .problem import make_problem

        params = dict(self.problem_params)
        params["dim"] = int(params.pop("N", 1))
        return make_problem(self.problem, **params)

    def to_dict(self) -> dict:
        return {
            "problem": {"name": self.problem, **self.problem_params},
            "grid": {"T": self.T, "n": self.n},
            "solver": {f.name: getattr(self.solver, f.name) for f in fields(self.solver)},
            "check": {f.name: getattr(self.check, f.name) for f in fields(self.check)},
            "verify": {f.name: getattr(self.verify, f.name) for f in fields(self.verify)},
            "output": {"dir": self.output_dir},
        }


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, list(known), n=1, cutoff=0.5)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _check_keys(section: dict, known, where: str):
    for key in section:
        if key not in known:
            path = f"{where}.{key}" if where else str(key)
            raise ConfigError(f"unknown key {path!r}{_suggest(str(key), known)}")


def _coerce(value, kind, key: str):
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        if kind is int:
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def _positive(value, key: str, allow_zero: bool = False):
    if value is None:
        return
    if (value < 0) if allow_zero else (value <= 0):
        rel = "non-negative" if allow_zero else "positive"
        raise ConfigError(f"{key} must be {rel}, got {value}")


def _fill(obj, section: dict, where: str):
    names = {f.name: f for f in fields(obj)}
    _check_keys(section, names, where)
    for key, value in section.items():
        current = getattr(obj, key)
        kind = int if isinstance(current, int) and not isinstance(current, bool) else float
        if key == "threads":
            kind = int
        v = _coerce(value, kind, f"{where}.{key}")
        _positive(v, f"{where}.{key}", allow_zero=key in _NONNEG)
        setattr(obj, key, v)


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return value


def parse_config(text: str, seed: Optional[int] = None) -> RunConfig:
    try:
        doc = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"config parse error{where}: {getattr(exc, 'problem', exc)}") from None
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    _check_keys(doc, ("problem", "grid", "solver", "check", "verify", "output"), "")

    cfg = RunConfig()
    prob = dict(_section(doc, "problem"))
    name = prob.pop("name", cfg.problem)
    if name not in PROBLEM_PARAMS:
        raise ConfigError(f"problem.name: unknown problem {name!r}{_suggest(str(name), PROBLEM_PARAMS)}")
    spec = PROBLEM_PARAMS[name]
    _check_keys(prob, spec, "problem")
    params = {}
    for key, (kind, default) in spec.items():
        v = _coerce(prob.get(key, default), kind, f"problem.{key}")
        _positive(v, f"problem.{key}")
        if v is not None:
            params[key] = v
    cfg.problem, cfg.problem_params = name, params

    grid = _section(doc, "grid")
    _check_keys(grid, ("T", "n"), "grid")
    T = _coerce(grid.get("T", cfg.T), float, "grid.T")
    n = _coerce(grid.get("n", cfg.n), int, "grid.n")
    _positive(T, "grid.T")
    if n < 3:
        raise ConfigError(f"grid.n must be >= 3, got {n}")
    cfg.T, cfg.n = T, n

    _fill(cfg.solver, _section(doc, "solver"), "solver")
    _fill(cfg.check, _section(doc, "check"), "check")
    _fill(cfg.verify, _section(doc, "verify"), "verify")
    out = _section(doc, "output")
    _check_keys(out, ("dir",), "output")
    cfg.output_dir = str(out.get("dir", cfg.output_dir))
    if seed is not None:
        cfg.solver.seed = int(seed)
    return cfg
