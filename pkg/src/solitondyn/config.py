"""INI-style experiment configuration.

Example::

    [experiment]
    equation = gp1d          ; or hartree3d
    mode = theorem1          ; or theorem2

    [potential]
    name = cos
    amplitude = 1.0

    [grid]
    n = 4096
    box = 200

    [run]
    h_list = 0.1, 0.05, 0.025
    dt = 0.001
    interval = 0.5
    horizon_rule = theorem   ; or fixed (uses T)
    c1 = 1.0
    c2 = 1.0
    delta = 0.0
    a0 = 0.5                 ; initial position in units of 1/h
    eps0_coef = 1.0          ; theorem2: eps0 = eps0_coef * h**eps0_power
    eps0_power = 0.6
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

DEFAULT_GRIDS = {"gp1d": (4096, 200.0), "hartree3d": (128, 40.0)}


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


@dataclass
class ExperimentConfig:
    equation: str = "gp1d"
    mode: str = "theorem1"
    potential: str = "cos"
    potential_params: dict = field(default_factory=dict)
    n: int = 4096
    box: float = 200.0
    h_list: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    dt: float = 1e-3
    interval: float = 0.5
    horizon_rule: str = "theorem"
    T: float = 10.0
    c1: float = 1.0
    c2: float = 1.0
    delta: float = 0.0
    a0: float = 0.5
    v0: float = 0.0
    eps0: float | None = None
    eps0_coef: float = 1.0
    eps0_power: float = 0.6
    seed: int = 0
    fit: bool = True
    richardson: bool = False
    workers: int = 1
    # ground state
    r_max: float = 30.0
    n_points: int = 2048
    gs_tol: float = 1e-10
    # spectral report
    n_basis: int = 56
    spectral_tol: float = 1e-10
    spectral_n: int | None = None
    spectral_box: float | None = None
    # ode comparison
    delta_list: list = field(default_factory=lambda: [0.0, 0.25])
    ode_dt: float = 0.01
    out_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        if self.equation not in DEFAULT_GRIDS:
            raise ConfigError(f"equation must be gp1d or hartree3d, got {self.equation!r}")
        if self.mode not in ("theorem1", "theorem2"):
            raise ConfigError(f"mode must be theorem1 or theorem2, got {self.mode!r}")
        if not self.h_list or any(not 0 < h <= 1 for h in self.h_list):
            raise ConfigError("h_list entries must lie in (0, 1]")
        if not 0 <= self.delta <= 0.5:
            raise ConfigError("delta must lie in [0, 1/2]")
        if any(not 0 <= d <= 0.5 for d in self.delta_list):
            raise ConfigError("delta_list entries must lie in [0, 1/2]")
        if self.horizon_rule not in ("fixed", "theorem"):
            raise ConfigError("horizon_rule must be fixed or theorem")
        if self.dt <= 0 or self.interval <= 0:
            raise ConfigError("dt and interval must be positive")
        if abs(self.interval / self.dt - round(self.interval / self.dt)) > 1e-9:
            raise ConfigError("interval must be a multiple of dt")
        if self.n < 8 or self.n % 2:
            raise ConfigError("grid n must be even and at least 8")
        if self.box <= 0:
            raise ConfigError("box must be positive")
        return self

    @property
    def dims(self) -> int:
        return 1 if self.equation == "gp1d" else 3

    def eps0_for(self, h: float) -> float:
        if self.mode == "theorem1":
            return 0.0 if self.eps0 is None else self.eps0
        if self.eps0 is not None:
            return self.eps0
        return self.eps0_coef * h**self.eps0_power

    def horizon(self, h: float) -> float:
        """Horizon rounded down to a whole number of observation intervals."""
        if self.horizon_rule == "fixed":
            T = self.T
        else:
            T = self.c1 / h + self.delta * np.log(1 / h) / (self.c2 * h)
        return float(max(1, np.floor(T / self.interval + 1e-9)) * self.interval)


_SECTIONS = {
    "experiment": {"equation": str, "mode": str, "seed": int, "workers": int},
    "potential": {"name": str},
    "grid": {"n": int, "box": float},
    "run": {
        "h_list": _floats, "dt": float, "interval": float, "horizon_rule": str, "T": float, "c1": float,
        "c2": float, "delta": float, "a0": float, "v0": float, "eps0": float, "eps0_coef": float,
        "eps0_power": float, "fit": "bool", "richardson": "bool",
    },
    "ground_state": {"r_max": float, "n_points": int, "tol": float},
    "spectral": {"n_basis": int, "tol": float, "n": int, "box": float},
    "ode_compare": {"delta_list": _floats, "dt": float},
    "output": {"dir": str},
}

_RENAME = {
    ("potential", "name"): "potential",
    ("ground_state", "tol"): "gs_tol",
    ("spectral", "tol"): "spectral_tol",
    ("spectral", "n"): "spectral_n",
    ("spectral", "box"): "spectral_box",
    ("ode_compare", "dt"): "ode_dt",
    ("output", "dir"): "out_dir",
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = ExperimentConfig()
    grid_given = cp.has_section("grid")
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        spec = _SECTIONS[section]
        for key, raw in cp.items(section):
            if section == "potential" and key != "name":
                vals = _floats(raw)
                cfg.potential_params[key] = vals[0] if len(vals) == 1 and key != "k" else vals
                continue
            if key not in spec:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            conv = spec[key]
            try:
                if conv == "bool":
                    value = cp.getboolean(section, key)
                else:
                    value = conv(raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
            setattr(cfg, _RENAME.get((section, key), key), value)
    if not grid_given:
        cfg.n, cfg.box = DEFAULT_GRIDS.get(cfg.equation, (cfg.n, cfg.box))
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config(p.read_text())
