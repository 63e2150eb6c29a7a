"""Scenario and simulator configuration.

All lengths are in µm, all times in µs. Table-1 style presets ``S0``,
``S1`` and ``S2`` are available through :func:`preset`; geometry values that
the scenario table does not fix (``D``, ``a``, ``kappa_d``) fall back to
:data:`GEOMETRY_DEFAULTS`.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "PbsConfig",
    "GEOMETRY_DEFAULTS",
    "PRESETS",
    "preset",
    "load_config",
    "config_hash",
]

# Assumed values, not scenario-table values.
GEOMETRY_DEFAULTS = {"D": 3.3e-4, "a": 0.5, "kappa_d": 8.5e-3}

DEFAULT_SAMPLE_TIMES = (100.0, 250.0, 500.0, 750.0, 1000.0)


class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending key."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and numerical parameters of one synapse scenario.

    ``kappa_a_agg`` is the aggregate binding rate of the boundary condition
    (µm/µs); the per NT-receptor pair rate is ``kappa_a_agg / C``.
    """

    N0: int = 1000
    C: int = 203
    kappa_a_agg: float = 1.52e-5
    kappa_d: float = GEOMETRY_DEFAULTS["kappa_d"]
    kappa_e: float = 1e-3
    D: float = GEOMETRY_DEFAULTS["D"]
    a: float = GEOMETRY_DEFAULTS["a"]
    epsilon: float = 1e-6
    delta_t: float = 50.0
    horizon: float = 1000.0
    nx: int = 201
    dt_pde: float = 0.5
    ode_tol: float = 1e-10
    sample_times: tuple = DEFAULT_SAMPLE_TIMES
    max_window_states: int = 2_000_000

    def __post_init__(self):
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        self.validate()

    def validate(self):
        if int(self.N0) != self.N0 or self.N0 < 1:
            raise ConfigError("N0", "must be an integer >= 1")
        if int(self.C) != self.C or self.C < 0:
            raise ConfigError("C", "must be an integer >= 0")
        for name in ("kappa_a_agg", "kappa_d", "kappa_e"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(name, f"must be a finite rate >= 0, got {value!r}")
        for name in ("D", "a", "epsilon", "delta_t", "horizon", "dt_pde", "ode_tol"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(name, f"must be > 0, got {value!r}")
        if self.epsilon >= 1:
            raise ConfigError("epsilon", "must be < 1")
        if int(self.nx) != self.nx or self.nx < 3:
            raise ConfigError("nx", "must be an integer >= 3")
        if self.dt_pde > self.horizon:
            raise ConfigError("dt_pde", "must not exceed horizon")
        for t in self.sample_times:
            if not 0 <= t <= self.horizon:
                raise ConfigError("sample_times", f"{t} outside [0, horizon]")
        if self.max_window_states < 1:
            raise ConfigError("max_window_states", "must be >= 1")

    @property
    def kappa_a0(self):
        """Per NT-receptor pair binding rate (µm/µs); 0 when ``C == 0``."""
        if self.C == 0:
            return 0.0
        return self.kappa_a_agg / self.C

    @property
    def n_intervals(self):
        return math.ceil(self.horizon / self.delta_t - 1e-9)

    def interval_bounds(self):
        """List of ``(t_k, t_{k+1})`` pairs covering ``[0, horizon]``."""
        edges = [min(k * self.delta_t, self.horizon) for k in range(self.n_intervals + 1)]
        edges[-1] = self.horizon
        return list(zip(edges[:-1], edges[1:]))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["sample_times"] = list(self.sample_times)
        return d


@dataclass(frozen=True)
class PbsConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    dt_pbs: float = 0.05
    trials: int = 6000
    seed: int = 12345

    def __post_init__(self):
        if not self.dt_pbs > 0:
            raise ConfigError("dt_pbs", "must be > 0")
        step = math.sqrt(2 * self.scenario.D * self.dt_pbs)
        if step > self.scenario.a / 10:
            raise ConfigError(
                "dt_pbs",
                f"diffusion step {step:.3g} um exceeds a/10 = {self.scenario.a / 10:.3g} um; reduce dt_pbs",
            )
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials", "must be an integer >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "dt_pbs": self.dt_pbs,
            "trials": self.trials,
            "seed": self.seed,
        }


PRESETS = {
    "S0": dict(N0=1000, C=203, kappa_a_agg=1.52e-5, kappa_e=1e-3, epsilon=1e-6, delta_t=50.0),
    "S1": dict(N0=1000, C=600, kappa_a_agg=4.48e-3, kappa_e=1e-3, epsilon=1e-6, delta_t=50.0),
    "S2": dict(N0=250, C=600, kappa_a_agg=4.48e-4, kappa_e=1e-5, epsilon=1e-6, delta_t=50.0),
}


def preset(name, **overrides):
    """Scenario preset ``S0``, ``S1`` or ``S2`` with optional overrides."""
    try:
        values = dict(PRESETS[name])
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    values.update(overrides)
    return ScenarioConfig(**values)


_INT_KEYS = {"N0", "C", "nx", "max_window_states", "trials", "seed"}
_SECTIONS = {
    "scenario": {"N0", "C", "kappa_a_agg", "kappa_d", "kappa_e", "D", "a", "horizon", "sample_times"},
    "pde": {"nx", "dt_pde"},
    "cme": {"epsilon", "delta_t", "ode_tol", "max_window_states"},
    "pbs": {"dt_pbs", "trials", "seed"},
}


def _parse_value(section, key, raw):
    try:
        if key == "sample_times":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if key in _INT_KEYS:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}") from None


def load_config(path=None, preset_name=None, **overrides):
    """Read a sectioned key-value config file into ``(ScenarioConfig, PbsConfig)``.

    Parameters
    ----------
    path : str or Path, optional
        INI-style file with sections ``[scenario]``, ``[pde]``, ``[cme]`` and
        ``[pbs]``. Keys carry the field names of :class:`ScenarioConfig` and
        :class:`PbsConfig`.
    preset_name : str, optional
        Start from a scenario preset; file values override it.
    **overrides
        Final overrides (e.g. from the command line); ``None`` values are ignored.
    """
    if preset_name and preset_name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset_name!r}")
    scenario_values = dict(PRESETS[preset_name]) if preset_name else {}
    pbs_values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config", f"file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError("config", f"parse error: {exc}") from None
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(section, "unknown section")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"{section}.{key}", "unknown key")
                value = _parse_value(section, key, raw)
                (pbs_values if section == "pbs" else scenario_values)[key] = value
    for key, value in overrides.items():
        if value is None:
            continue
        (pbs_values if key in _SECTIONS["pbs"] else scenario_values)[key] = value
    for key, default in GEOMETRY_DEFAULTS.items():
        if key not in scenario_values:
            logger.warning("%s not given; using assumed default %g", key, default)
    scenario = ScenarioConfig(**scenario_values)
    return scenario, PbsConfig(scenario=scenario, **pbs_values)


def config_hash(config):
    """SHA-256 of the canonical JSON form of a config."""
    payload = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
