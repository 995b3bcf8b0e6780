"""JSON experiment configuration.

One document with the sections ``quad``, ``episode``, ``gains_bounds``,
``kernel``, ``nystrom``, ``bo`` and ``cli``.  Every section is optional and
falls back to its defaults; unknown keys are rejected with their full path.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .optim import BoConfig
from .quad import EpisodeConfig, GainBounds, QuadParams, QuadrotorBenchmark
from .selection import NystromConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GainsSection:
    low: tuple = GainBounds().low
    high: tuple = GainBounds().high
    default: tuple = QuadrotorBenchmark().default_gains


@dataclass(frozen=True)
class KernelSection:
    # benchmark defaults; the kernel module itself defaults to lengthscale 0.2
    lengthscale: float = 0.1
    signal_variance: float = 1.0
    variance: float = 1e5
    top_m: int = 3
    dim_keep: int = 9


@dataclass(frozen=True)
class NystromSection:
    c: int | None = None
    k: int | None = None
    mu: float = NystromConfig().mu
    trials: int = 1000
    n_trees: int = 200
    min_leaf: int = 2

    def nystrom(self) -> NystromConfig:
        return NystromConfig(self.c, self.k, self.mu, self.trials)


@dataclass(frozen=True)
class CliSection:
    n_prior: int = 36
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class Config:
    quad: QuadParams = field(default_factory=QuadParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    gains_bounds: GainsSection = field(default_factory=GainsSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    nystrom: NystromSection = field(default_factory=NystromSection)
    bo: BoConfig = field(default_factory=BoConfig)
    cli: CliSection = field(default_factory=CliSection)

    def benchmark(self) -> QuadrotorBenchmark:
        g = self.gains_bounds
        return QuadrotorBenchmark(self.quad, self.episode, GainBounds(g.low, g.high), g.default)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def replace(self, section: str, **changes) -> "Config":
        return dataclasses.replace(
            self, **{section: dataclasses.replace(getattr(self, section), **changes)}
        )


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key")
    kwargs = {k: _tupleize(v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config: expected an object")
    sections = {f.name: f for f in dataclasses.fields(Config)}
    built = {}
    for key, value in data.items():
        if key not in sections:
            raise ConfigError(f"config.{key}: unknown section")
        built[key] = _build(sections[key].default_factory, value, key)
    cfg = Config(**built)
    if cfg.kernel.dim_keep < 1 or cfg.kernel.dim_keep > 9:
        raise ConfigError("kernel.dim_keep: must lie in 1..9")
    if not 1 <= cfg.kernel.top_m <= 9:
        raise ConfigError("kernel.top_m: must lie in 1..9")
    if cfg.cli.n_prior < 1:
        raise ConfigError("cli.n_prior: must be >= 1")
    if abs(cfg.quad.dt - cfg.episode.dt) > 1e-15:
        raise ConfigError("episode.dt: must equal quad.dt")
    try:
        GainBounds(cfg.gains_bounds.low, cfg.gains_bounds.high).check(cfg.gains_bounds.default)
    except ValueError as exc:
        raise ConfigError(f"gains_bounds.default: {exc}") from exc
    return cfg


def load_config(path) -> Config:
    if path is None:
        return Config()
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
