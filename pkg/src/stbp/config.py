"""Experiment configuration read from TOML, with unknown keys rejected."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli

EXPERIMENTS = ("annulus-regression", "dynamic-ct")
MODELS = ("stbp", "stgp", "iid-time")
MODEL_ALIASES = {"time-uncorrelated": "iid-time"}


class ConfigError(ValueError):
    pass


@dataclass
class GridCfg:
    nx: int = 16
    ny: int = 16


@dataclass
class TimeCfg:
    J: int = 10
    t0: float = 0.0
    t1: float = 1.0


@dataclass
class KernelCfg:
    nu: float = 0.5
    rho: float = 0.1
    s_exp: float = 1.0
    identity: bool = False


@dataclass
class PriorCfg:
    q: float = 1.0
    s: float = 1.0
    kappa: float = 1.0
    L: int | None = None
    basis: str = "fourier-cosine"
    kernel: KernelCfg = field(default_factory=KernelCfg)


@dataclass
class ForwardCfg:
    sigma: float = 0.1  # absolute noise std (annulus)
    relative_noise: float = 0.01  # per-frame relative level (CT)
    angles: int = 11
    detectors: int = 95
    rotate_angles: bool = True  # shift the angle set a little every frame


@dataclass
class MapCfg:
    max_iter: int = 1000
    grad_tol: float = 1e-6
    step_tol: float = 1e-12
    memory: int = 10
    jacobian: bool = False
    init_scale: float = 0.1


@dataclass
class McmcCfg:
    step_size: float = 0.05
    leapfrog_steps: int = 1
    beta: float = 0.0
    alpha: float = 1.0
    n_samples: int = 0
    n_burnin: int = 0
    thin: int = 1
    adapt: bool = False
    target_accept: float = 0.65
    rank: int = 20


@dataclass
class OutputCfg:
    frames: list = field(default_factory=lambda: [0, -1])
    pgm: bool = True


@dataclass
class ExperimentConfig:
    experiment: str = "annulus-regression"
    seed: int = 0
    model: str = "stbp"
    out_dir: str = "out"
    grid: GridCfg = field(default_factory=GridCfg)
    time: TimeCfg = field(default_factory=TimeCfg)
    prior: PriorCfg = field(default_factory=PriorCfg)
    forward: ForwardCfg = field(default_factory=ForwardCfg)
    map: MapCfg = field(default_factory=MapCfg)
    mcmc: McmcCfg = field(default_factory=McmcCfg)
    output: OutputCfg = field(default_factory=OutputCfg)
    phantom: list = field(default_factory=list)  # CT shapes; empty means the built-in default

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        self.model = MODEL_ALIASES.get(self.model, self.model)
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if min(self.grid.nx, self.grid.ny, self.time.J) < 1:
            raise ConfigError("grid sizes and J must be positive")
        if not 0 < self.prior.q <= 2:
            raise ConfigError("prior.q must lie in (0, 2]")
        if self.forward.sigma <= 0 or self.forward.relative_noise <= 0:
            raise ConfigError("noise levels must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        return self

    def effective(self) -> tuple[float, bool]:
        """``(q, identity_kernel)`` after applying the model switch."""
        if self.model == "stgp":
            return 2.0, self.prior.kernel.identity
        if self.model == "iid-time":
            return self.prior.q, True
        return self.prior.q, self.prior.kernel.identity


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'top level'}: expected a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'top level'}: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        f = fields[key]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        path = f"{where}.{key}" if where else key
        if dataclasses.is_dataclass(default):
            kwargs[f.name] = _build(type(default), value, path)
        else:
            kwargs[f.name] = _coerce(value, default, path)
    return cls(**kwargs)


def _coerce(value, default, path):
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{path}: expected a boolean")
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if default is not None and not isinstance(value, type(default)):
        raise ConfigError(f"{path}: expected {type(default).__name__}, got {type(value).__name__}")
    return value


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return _build(ExperimentConfig, data, "").validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)
