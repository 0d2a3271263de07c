"""Flat key=value run configuration with dotted sections.

The file format is one ``key = value`` pair per line with ``#`` comments;
unknown keys are rejected by name.  ``resolve`` materialises every default,
and the resolved text (sorted keys) is what gets digested and copied into
each output directory, so sweeps stay diffable.
"""

from __future__ import annotations

import hashlib
import math

from .integrator import SolverConfig
from .noise import NoiseModel
from .nonlinearity import DealiasRule, MollifierParam
from .spectral import Grid, SpectralField, ZTNormParams, random_field, single_mode_field
from . import streams


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_or_inf(s: str) -> float:
    if s.lower() in ("inf", "infinity"):
        return math.inf
    return float(s)


def _parse_int_tuple(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _parse_float_list(s: str):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _parse_str_list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _enum(*choices):
    def parse(s: str) -> str:
        if s not in choices:
            raise ValueError(f"must be one of {choices}, got {s!r}")
        return s

    return parse


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, default)
SCHEMA = {
    "d": (int, 2),
    "grid.n": (int, 16),
    "grid.length": (float, 2.0 * math.pi),
    "nu": (float, 1.0),
    "gamma": (float, 1.0),
    "alpha": (float, 0.0),
    "mollifier.m": (_parse_float_or_inf, math.inf),
    "dt": (float, 0.02),
    "t_end": (float, 20.0),
    "dealias": (_enum("two_thirds", "none"), "two_thirds"),
    "nonlinearity": (_parse_bool, True),
    "seed": (int, 1),
    "forcing.kind": (_enum("zero", "single_mode"), "single_mode"),
    "forcing.amplitude": (float, 0.1),
    "forcing.mode": (_parse_int_tuple, (1, 0)),
    "ic.kind": (_enum("zero", "random_smooth"), "random_smooth"),
    "ic.norm": (float, 1.0),
    "ic.seed": (int, 7),
    "noise.g": (float, 0.5),
    "noise.c0": (float, 0.1),
    "noise.r": (float, 2.0),
    "noise.psi": (_enum("one", "tanh"), "one"),
    "noise.seed": (int, 1),
    "obs.cadence": (int, 1),
    "snapshots.cadence": (int, 10),
    "snapshots.fields": (_parse_str_list, ()),
    "zt.beta": (float, 0.1),
    "zt.delta": (float, 0.25),
    "zt.p": (float, 8.0 / 3.0),
    "zeta.samples": (int, 64),
    "zeta.t_probe": (float, -1.0),
    "zeta.alphas": (_parse_float_list, (0.0, 1.0, 4.0, 16.0, 64.0, 256.0)),
    "moll.grid": (_parse_float_list, (4.0, 16.0, 64.0, 256.0)),
    "ensemble.size": (int, 8),
    "ensemble.workers": (int, 0),
    "estimators.burn_in": (float, -1.0),
    "estimators.horizon": (float, -1.0),
    "estimators.r_points": (int, 8),
    "out.dir": (str, "out"),
}


def parse_text(text: str) -> dict:
    """Parse config text into raw {key: value-string}; keys must be known."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r} (line {lineno})")
        if key in raw:
            raise ConfigError(f"duplicate configuration key {key!r} (line {lineno})")
        raw[key] = value
    return raw


def resolve(raw: dict, overrides: dict | None = None) -> dict:
    """Typed config with every default materialised."""
    out = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                out[key] = parser(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        else:
            out[key] = default
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        out[key] = value
    return out


def load(path, overrides: dict | None = None) -> dict:
    with open(path) as fh:
        return resolve(parse_text(fh.read()), overrides)


def resolved_text(cfg: dict) -> str:
    lines = [f"{key} = {_fmt(cfg[key])}" for key in sorted(cfg)]
    return "\n".join(lines) + "\n"


def digest(cfg: dict) -> str:
    return hashlib.sha256(resolved_text(cfg).encode()).hexdigest()[:16]


# -- materialisation -----------------------------------------------------------


def build_grid(cfg: dict) -> Grid:
    return Grid(d=cfg["d"], n=cfg["grid.n"], length=cfg["grid.length"])


def build_noise(cfg: dict, grid: Grid) -> NoiseModel:
    return NoiseModel(
        grid,
        g=cfg["noise.g"],
        c0=cfg["noise.c0"],
        r=cfg["noise.r"],
        psi=cfg["noise.psi"],
        seed=cfg["noise.seed"],
    )


def build_forcing(cfg: dict, grid: Grid) -> SpectralField | None:
    if cfg["forcing.kind"] == "zero" or cfg["forcing.amplitude"] == 0.0:
        return None
    mode = cfg["forcing.mode"]
    if len(mode) != grid.d:
        mode = tuple(mode) + (0,) * (grid.d - len(mode))
    return single_mode_field(grid, mode[: grid.d], amplitude=cfg["forcing.amplitude"])


def build_ic(cfg: dict, grid: Grid) -> SpectralField | None:
    if cfg["ic.kind"] == "zero" or cfg["ic.norm"] == 0.0:
        return None
    return random_field(
        grid, streams.stream(cfg["ic.seed"], 0, 0), norm_H=cfg["ic.norm"]
    )


def build_solver_config(cfg: dict, zero_ic: bool = False) -> SolverConfig:
    grid = build_grid(cfg)
    return SolverConfig(
        grid=grid,
        nu=cfg["nu"],
        gamma=cfg["gamma"],
        alpha=cfg["alpha"],
        mollifier=MollifierParam(cfg["mollifier.m"]),
        dt=cfg["dt"],
        t_end=cfg["t_end"],
        noise=build_noise(cfg, grid) if cfg["noise.c0"] > 0 else None,
        forcing=build_forcing(cfg, grid),
        ic=None if zero_ic else build_ic(cfg, grid),
        dealias=DealiasRule(cfg["dealias"]),
        nonlinearity=cfg["nonlinearity"],
        obs_cadence=cfg["obs.cadence"],
        snapshot_cadence=cfg["snapshots.cadence"],
        snapshot_fields=cfg["snapshots.fields"],
        delta=cfg["zt.delta"],
        seed=cfg["seed"],
    )


def build_zt_params(cfg: dict) -> ZTNormParams:
    return ZTNormParams(
        beta=cfg["zt.beta"], delta=cfg["zt.delta"], p=cfg["zt.p"], g=cfg["noise.g"]
    )
