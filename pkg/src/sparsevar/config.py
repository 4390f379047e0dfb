"""Run configuration: one TOML file with a section per command.

Keys left out of the file take their defaults; ``None`` values are omitted
when writing so that load -> dump -> load is the identity.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, asdict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

DEFAULT_SEED = 20240101

# TOML key -> dataclass field where they differ
_RENAME = {"lambda": "lam"}
_RENAME_BACK = {v: k for k, v in _RENAME.items()}


@dataclass
class SimulateSection:
    T: int = 500
    burn_in: int = 500
    start_date: str | None = None
    out: str = "simulated.csv"


@dataclass
class FitSection:
    data: str = "simulated.csv"
    r: int = 2
    penalty: str = "scad"
    lam: float | None = None
    a: float | None = None
    weight: str = "identity"
    standardize: bool = True
    tol: float = 1e-7
    max_iter: int = 10000
    folds: int = 10
    certify: bool = False
    covariance: bool = False
    out: str = "fit.json"


@dataclass
class CVSection:
    data: str = "simulated.csv"
    r: int = 2
    penalty: str = "scad"
    a: float | None = None
    weight: str = "identity"
    folds: int = 10
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    contiguous: bool = False
    out: str = "cv.json"


@dataclass
class MonteCarloSection:
    sample_sizes: list = field(default_factory=lambda: [100, 300, 500, 1000])
    replications: int = 1000
    estimators: list = field(default_factory=lambda: ["oracle", "mle", "scad:2.5", "scad:20",
                                                      "mcp:1.5", "mcp:20", "lasso"])
    cv: bool = True
    cv_mode: str = "full"
    folds: int = 10
    fixed_lambda: float | None = None
    burn_in: int = 500
    out: str = "report.json"
    table: str = "report.txt"


@dataclass
class ForecastSection:
    data: str | None = None
    synthetic_seed: int = 0
    start: str = "2001-12"
    end: str = "2007-12"
    horizons: list = field(default_factory=lambda: [1, 3, 6, 12])
    tau_medium: float = 30.0
    r: int = 12
    penalty: str = "scad"
    a: float | None = None
    lam: float | None = None
    out: str = "forecast.json"
    tables_prefix: str = "forecast"


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    workers: int = 1
    log_level: str = "WARNING"
    simulate: SimulateSection = field(default_factory=SimulateSection)
    fit: FitSection = field(default_factory=FitSection)
    cv: CVSection = field(default_factory=CVSection)
    montecarlo: MonteCarloSection = field(default_factory=MonteCarloSection)
    forecast: ForecastSection = field(default_factory=ForecastSection)


_SECTIONS = {"simulate": SimulateSection, "fit": FitSection, "cv": CVSection,
             "montecarlo": MonteCarloSection, "forecast": ForecastSection}


class ConfigError(ValueError):
    pass


def _coerce(cls, key: str, value):
    names = {f.name: f for f in fields(cls)}
    name = _RENAME.get(key, key)
    if name not in names:
        raise ConfigError(f"unknown key {key!r} for [{cls.__name__}]")
    default = getattr(cls(), name)
    if isinstance(default, bool):
        if isinstance(value, str):
            value = value.lower() in ("1", "true", "yes", "on")
        return name, bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        return name, int(value)
    if isinstance(default, float):
        return name, float(value)
    if isinstance(default, list) and isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        return name, [int(p) if p.lstrip("-").isdigit() else p for p in parts]
    if default is None and isinstance(value, str) and name in ("lam", "a", "fixed_lambda"):
        return name, float(value)
    return name, value


def from_dict(d: dict) -> RunConfig:
    cfg = RunConfig()
    for key, value in d.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            section = getattr(cfg, key)
            for k, v in value.items():
                name, v = _coerce(type(section), k, v)
                setattr(section, name, v)
        else:
            name, v = _coerce(RunConfig, key, value)
            setattr(cfg, name, v)
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    out = {}
    for key, value in asdict(cfg).items():
        if isinstance(value, dict):
            out[key] = {_RENAME_BACK.get(k, k): v for k, v in value.items() if v is not None}
        elif value is not None:
            out[key] = value
    return out


def load(path) -> RunConfig:
    with open(path, "rb") as fh:
        return from_dict(tomllib.load(fh))


def loads(text: str) -> RunConfig:
    return from_dict(tomllib.loads(text))


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def apply_override(cfg: RunConfig, assignment: str) -> None:
    """Apply ``section.key=value`` (or ``key=value`` for top-level keys)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, value = assignment.split("=", 1)
    parts = path.strip().split(".")
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    if len(parts) == 1:
        name, v = _coerce(RunConfig, parts[0], parsed)
        setattr(cfg, name, v)
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        section = getattr(cfg, parts[0])
        name, v = _coerce(type(section), parts[1], parsed)
        setattr(section, name, v)
    else:
        raise ConfigError(f"cannot resolve override key {path!r}")
