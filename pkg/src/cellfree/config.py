"""Simulation parameters, validation and flat TOML config files."""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .scheduler import Policy


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """All knobs of one simulation run. Defaults are the dense-network setup."""

    grid_rows: int = 3
    grid_cols: int = 4
    n_antennas: int = 8
    area_side: float = 50.0
    k_tot: int = 100
    k_act: int = 40
    tau_p: int = 20
    t_dim: int = 200
    delta: float = math.pi / 8
    eta: float = 1.0
    q_max: int = 10
    memory_size: int = 100
    n_init: int = 500
    v_param: float = 10000.0
    # None: (1 - tau_p/T) times the best allocated rate after start-up
    a_max: float | None = None
    policy: Policy = Policy.RANDOM
    # main-loop length for baselines, or for queue policies without early stop
    n_slots: int = 1000
    stop_at_steady_state: bool = True
    max_slots: int = 20000
    steady_window: int = 500
    steady_tol: float = 0.05
    n_layouts: int = 5
    seed: int = 0
    bandwidth_hz: float = 10e6
    n0_dbm_hz: float = -174.0
    shadowing: bool = True
    log_floor: float = 1e-3

    def __post_init__(self):
        if not isinstance(self.policy, Policy):
            object.__setattr__(self, "policy", Policy.parse(str(self.policy)))

    @property
    def n_ru(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def pilot_efficiency(self) -> float:
        return 1.0 - self.tau_p / self.t_dim

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> "SimConfig":
        problems = []
        for name in ("grid_rows", "grid_cols", "n_antennas", "k_tot", "k_act", "tau_p", "t_dim", "q_max",
                     "memory_size", "n_init", "n_slots", "max_slots", "steady_window", "n_layouts"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.tau_p >= self.t_dim:
            problems.append("tau_p must be smaller than t_dim")
        if self.k_act > self.k_tot:
            problems.append("k_act must not exceed k_tot")
        if self.area_side <= 0:
            problems.append("area_side must be positive")
        if not 0 < self.delta <= 2 * math.pi:
            problems.append("delta must lie in (0, 2*pi]")
        if self.eta <= 0 or self.v_param <= 0 or self.steady_tol <= 0 or self.log_floor <= 0:
            problems.append("eta, v_param, steady_tol and log_floor must be positive")
        if self.a_max is not None and self.a_max <= 0:
            problems.append("a_max must be positive")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["policy"] = self.policy.value
        return d


FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def from_mapping(values: dict, base: SimConfig | None = None) -> SimConfig:
    """Overlay a flat mapping onto ``base`` (defaults if omitted), type-checked."""
    base = base or SimConfig()
    unknown = sorted(set(values) - set(FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    changes = {}
    for key, raw in values.items():
        default = getattr(SimConfig(), key)
        try:
            if key == "policy":
                changes[key] = Policy.parse(str(raw))
            elif key == "a_max":
                changes[key] = None if raw in (None, "auto", "") else float(raw)
            elif isinstance(default, bool):
                if not isinstance(raw, bool):
                    raise TypeError(f"expected true/false, got {raw!r}")
                changes[key] = raw
            elif isinstance(default, int):
                if isinstance(raw, bool) or float(raw) != int(raw):
                    raise TypeError(f"expected an integer, got {raw!r}")
                changes[key] = int(raw)
            else:
                changes[key] = float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return base.replace(**changes)


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    """Read a flat TOML file, or the ``config`` block of a run manifest (``.json``)."""
    path = Path(path)
    try:
        if path.suffix == ".json":
            values = json.loads(path.read_text(encoding="utf-8"))["config"]
        else:
            values = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (KeyError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat, found table(s): {', '.join(nested)}")
    return from_mapping(values, base)


def dump_toml(config: SimConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if value is None:
            lines.append(f'{key} = "auto"')
        elif isinstance(value, bool):
            lines.append(f"{key} = {str(value).lower()}")
        elif isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
