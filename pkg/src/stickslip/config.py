"""Declarative experiment configuration (JSON).

Schema (all keys optional unless noted)::

    {
      "preset": "case_a" | "case_b",          # or give "params"
      "params": {"k_p": 3, "k_v": 6.4, "k_i": 4, "f_c": 1},
      "initial_conditions": [[e_i, s, v], ...],
      "random_ics": {"count": 5, "low": -5, "high": 5},
      "seed": 42,
      "horizon": 40.0,
      "sim": {"event_tol": 1e-10, "max_events": 10000, "dense_output_dt": 0.01},
      "audit_dt": 0.001,
      "perturbation": {"rho_v": 0.3, "f_s": 1.25, "v_s": 0.1,
                       "eps": 1e-5, "step": 5e-6,
                       "rho_list": [0, 0.05, 0.1, 0.2, 0.3]},
      "audits": {"decrease": true, "stability": true, "iss": true},
      "output_dir": "out"
    }

At least one initial condition or a positive random count is required.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import PRESETS, Params, StateZ, validate_params
from .simulator import SimOptions

DEFAULT_RHO_LIST = (0.0, 0.05, 0.1, 0.2, 0.3)


@dataclass(frozen=True)
class Perturbation:
    rho_v: float = 0.3
    f_s: float = 1.25
    v_s: float = 0.1
    eps: float = 1e-5
    step: float = 5e-6
    rho_list: tuple = DEFAULT_RHO_LIST

    def __post_init__(self):
        if self.rho_v < 0 or any(r < 0 for r in self.rho_list):
            raise ConfigError("rho values must be nonnegative")
        if not (self.v_s > 0 and self.eps > 0 and self.step > 0):
            raise ConfigError("v_s, eps and step must be positive")
        if not self.rho_list:
            raise ConfigError("rho_list must not be empty")

    def peak_for(self, rho: float, f_c: float) -> float:
        """Static peak scaled with ``rho`` so the curve stays inside the inflated graph."""
        if self.rho_v == 0:
            return f_c
        return f_c + (self.f_s - f_c) * rho / self.rho_v


@dataclass(frozen=True)
class Audits:
    decrease: bool = True
    stability: bool = True
    iss: bool = True


@dataclass(frozen=True)
class RandomICs:
    count: int = 0
    low: float = -5.0
    high: float = 5.0


@dataclass(frozen=True)
class ExperimentConfig:
    params: Params
    initial_conditions: tuple = ()
    random_ics: RandomICs = RandomICs()
    seed: int = 0
    horizon: float = 40.0
    sim: SimOptions = SimOptions()
    audit_dt: float = 1e-3
    perturbation: Perturbation | None = None
    audits: Audits = Audits()
    output_dir: str = "out"
    preset: str | None = None

    def __post_init__(self):
        if not self.initial_conditions and self.random_ics.count <= 0:
            raise ConfigError("need initial_conditions or a positive random_ics.count")
        if self.seed < 0:
            raise ConfigError("seed must be an unsigned integer")
        if not self.horizon > 0 or not self.audit_dt > 0:
            raise ConfigError("horizon and audit_dt must be positive")

    def all_initial_conditions(self) -> list:
        """Explicit states followed by the seeded random draws."""
        ics = [np.asarray(z, dtype=float) for z in self.initial_conditions]
        if self.random_ics.count > 0:
            rng = np.random.default_rng(self.seed)
            draws = rng.uniform(self.random_ics.low, self.random_ics.high, (self.random_ics.count, 3))
            ics.extend(draws)
        return ics

    def sim_options(self, dense_output_dt: float | None = None) -> SimOptions:
        dt = self.sim.dense_output_dt if dense_output_dt is None else dense_output_dt
        return replace(self.sim, horizon=self.horizon, dense_output_dt=dt)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = {k: getattr(self.params, k) for k in ("k_p", "k_v", "k_i", "f_c")}
        out["initial_conditions"] = [list(map(float, z)) for z in self.initial_conditions]
        return out


def _sub(raw: dict, key: str, cls, **extra):
    block = raw.get(key)
    if block is None:
        return cls(**extra) if extra else cls()
    if not isinstance(block, dict):
        raise ConfigError(f"'{key}' must be an object")
    try:
        return cls(**{**block, **extra})
    except TypeError as exc:
        raise ConfigError(f"bad '{key}' block: {exc}") from exc


def from_dict(raw: dict, preset: str | None = None) -> ExperimentConfig:
    known = {
        "preset", "params", "initial_conditions", "random_ics", "seed", "horizon",
        "sim", "audit_dt", "perturbation", "audits", "output_dir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    name = preset or raw.get("preset")
    if "params" in raw and preset is None:
        p = raw["params"]
        try:
            params = validate_params(p["k_p"], p["k_v"], p["k_i"], p["f_c"])
        except KeyError as exc:
            raise ConfigError(f"params missing {exc}") from exc
    elif name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        params = PRESETS[name]
    else:
        raise ConfigError("config needs 'preset' or 'params'")
    ics = []
    for z in raw.get("initial_conditions", []):
        if len(z) != 3 or not np.all(np.isfinite(np.asarray(z, dtype=float))):
            raise ConfigError(f"initial condition {z} must be three finite numbers")
        ics.append(StateZ(*map(float, z)))
    pert = None
    if raw.get("perturbation") is not None:
        block = dict(raw["perturbation"])
        if "rho_list" in block:
            block["rho_list"] = tuple(float(r) for r in block["rho_list"])
        pert = _sub({"perturbation": block}, "perturbation", Perturbation)
    sim_block = dict(raw.get("sim") or {})
    sim_block.pop("horizon", None)
    try:
        sim = SimOptions(horizon=float(raw.get("horizon", 40.0)), **sim_block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'sim' block: {exc}") from exc
    return ExperimentConfig(
        params=params,
        initial_conditions=tuple(ics),
        random_ics=_sub(raw, "random_ics", RandomICs),
        seed=int(raw.get("seed", 0)),
        horizon=float(raw.get("horizon", 40.0)),
        sim=sim,
        audit_dt=float(raw.get("audit_dt", 1e-3)),
        perturbation=pert,
        audits=_sub(raw, "audits", Audits),
        output_dir=str(raw.get("output_dir", "out")),
        preset=name if params is PRESETS.get(name) else None,
    )


def load_config(path: str | Path, preset: str | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(raw, preset)


def default_config(preset: str = "case_a") -> ExperimentConfig:
    """Single-IC run from ``(0, 1, 0)`` with the standard perturbation block."""
    return from_dict(
        {
            "preset": preset,
            "initial_conditions": [[0.0, 1.0, 0.0]],
            "perturbation": {},
        }
    )
