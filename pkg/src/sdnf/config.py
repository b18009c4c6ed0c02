"""Experiment configuration: nested YAML blocks mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .sde import SCHEMES


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass
class ConnectivityBlock:
    amplitude: float = 2.0
    decay: float = 0.08
    wavelength: float = 10.0


@dataclass
class StimulusBlock:
    baseline_on: float = -3.39967
    baseline_off: float = -2.89967
    amplitude: float = 8.0
    center: float = 0.0
    width: float = 3.0
    switch_time: float = 5.0


@dataclass
class ModelBlock:
    decay: float = 1.0
    threshold: float = 0.0
    noise_level: float = 0.05
    correlation_length: float = 0.1
    half_length: float = 100.0
    heaviside_tie: float = 0.0
    connectivity: ConnectivityBlock = field(default_factory=ConnectivityBlock)
    stimulus: StimulusBlock = field(default_factory=StimulusBlock)


@dataclass
class DiscretizationBlock:
    n_modes: int = 50
    n_subdivisions: int = 500
    h_x: float | None = None
    h_t: float = 0.1
    T: float = 10.0
    truth_scheme: str = "it15"


@dataclass
class ObservationBlock:
    dt: float = 0.2
    dx: float = 4.0
    r_scale: float = 1e-3
    # ratio of simulated measurement noise variance to the filter's R
    noise_mismatch: float = 1.0


@dataclass
class FilterBlock:
    schemes: list[str] = field(default_factory=lambda: ["em05", "it15"])
    subdivisions: int = 1
    pi0_scale: float = 0.1
    surrogate_steepness: float = 20.0


@dataclass
class MonteCarloBlock:
    runs: int = 50
    master_seed: int = 20230101
    workers: int = 1


@dataclass
class PatternBlock:
    min_width: int = 3
    periodic: bool = True


@dataclass
class SweepBlock:
    dx: list[float] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    discretization: DiscretizationBlock = field(default_factory=DiscretizationBlock)
    observation: ObservationBlock = field(default_factory=ObservationBlock)
    filter: FilterBlock = field(default_factory=FilterBlock)
    monte_carlo: MonteCarloBlock = field(default_factory=MonteCarloBlock)
    pattern: PatternBlock = field(default_factory=PatternBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)

    @property
    def h_x(self) -> float:
        return 2.0 * self.model.half_length / self.discretization.n_subdivisions

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def with_overrides(self, **blocks: dict[str, Any]) -> "ExperimentConfig":
        """Copy with some keys replaced, e.g. ``with_overrides(model={"noise_level": 0.5})``."""
        data = self.to_dict()
        for block, values in blocks.items():
            _merge(data.setdefault(block, {}), values)
        return from_dict(data)


def _merge(dst: dict, src: dict):
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v


def _build(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict[str, Any] | None) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data or {}, "")
    validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return from_dict({})
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return from_dict(data)


def full_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Restore the full-size setup: K=100 modes, N=1000 subdivisions, M=500 runs."""
    return cfg.with_overrides(discretization={"n_modes": 100, "n_subdivisions": 1000, "h_x": None},
                              monte_carlo={"runs": 500})


def _number(value, key, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{key}: must be > 0, got {value!r}")
    if nonneg and not value >= 0:
        raise ConfigError(f"{key}: must be >= 0, got {value!r}")


def _multiple(a: float, b: float) -> bool:
    r = a / b
    return abs(r - round(r)) < 1e-9 * max(1.0, r) and round(r) >= 1


def validate(cfg: ExperimentConfig) -> None:
    m, d, o, f = cfg.model, cfg.discretization, cfg.observation, cfg.filter
    _number(m.decay, "model.decay", positive=True)
    _number(m.threshold, "model.threshold")
    _number(m.noise_level, "model.noise_level", nonneg=True)
    _number(m.correlation_length, "model.correlation_length", positive=True)
    _number(m.half_length, "model.half_length", positive=True)
    _number(m.heaviside_tie, "model.heaviside_tie")
    if not 0 <= m.heaviside_tie <= 1:
        raise ConfigError(f"model.heaviside_tie: must lie in [0, 1], got {m.heaviside_tie}")
    for k in ("amplitude", "decay", "wavelength"):
        _number(getattr(m.connectivity, k), f"model.connectivity.{k}", positive=k != "amplitude")
    s = m.stimulus
    for k in ("baseline_on", "baseline_off", "amplitude", "center"):
        _number(getattr(s, k), f"model.stimulus.{k}")
    _number(s.width, "model.stimulus.width", positive=True)
    _number(s.switch_time, "model.stimulus.switch_time", nonneg=True)

    _number(d.n_modes, "discretization.n_modes", positive=True, integer=True)
    _number(d.n_subdivisions, "discretization.n_subdivisions", positive=True, integer=True)
    if d.n_subdivisions <= 2 * d.n_modes:
        raise ConfigError(f"discretization.n_subdivisions: need N > 2K, got N={d.n_subdivisions}, "
                          f"K={d.n_modes}")
    if d.h_x is not None:
        _number(d.h_x, "discretization.h_x", positive=True)
        if abs(d.h_x - cfg.h_x) > 1e-12 * cfg.h_x:
            raise ConfigError(f"discretization.h_x: {d.h_x} disagrees with 2L/N = {cfg.h_x}")
    _number(d.h_t, "discretization.h_t", positive=True)
    _number(d.T, "discretization.T", positive=True)
    if not _multiple(d.T, d.h_t):
        raise ConfigError(f"discretization.T: {d.T} is not a multiple of h_t={d.h_t}")
    if d.truth_scheme not in SCHEMES:
        raise ConfigError(f"discretization.truth_scheme: expected one of {SCHEMES}, got {d.truth_scheme!r}")
    if not s.switch_time <= d.T:
        raise ConfigError(f"model.stimulus.switch_time: {s.switch_time} exceeds T={d.T}")

    _number(o.dt, "observation.dt", positive=True)
    if not _multiple(o.dt, d.h_t):
        raise ConfigError(f"observation.dt: {o.dt} is not a multiple of h_t={d.h_t}")
    if not _multiple(d.T, o.dt):
        raise ConfigError(f"observation.dt: T={d.T} is not a multiple of dt={o.dt}")
    _number(o.r_scale, "observation.r_scale", positive=True)
    _number(o.noise_mismatch, "observation.noise_mismatch", nonneg=True)
    for key, dx in [("observation.dx", o.dx)] + [(f"sweep.dx[{i}]", v) for i, v in enumerate(cfg.sweep.dx)]:
        _number(dx, key, positive=True)
        if not _multiple(dx, cfg.h_x):
            raise ConfigError(f"{key}: {dx} is not a multiple of h_x={cfg.h_x}")

    if not f.schemes or any(sc not in SCHEMES for sc in f.schemes):
        raise ConfigError(f"filter.schemes: expected a non-empty subset of {SCHEMES}, got {f.schemes!r}")
    _number(f.subdivisions, "filter.subdivisions", positive=True, integer=True)
    _number(f.pi0_scale, "filter.pi0_scale", positive=True)
    _number(f.surrogate_steepness, "filter.surrogate_steepness", positive=True)

    mc = cfg.monte_carlo
    _number(mc.runs, "monte_carlo.runs", positive=True, integer=True)
    _number(mc.master_seed, "monte_carlo.master_seed", nonneg=True, integer=True)
    _number(mc.workers, "monte_carlo.workers", positive=True, integer=True)
    _number(cfg.pattern.min_width, "pattern.min_width", positive=True, integer=True)
    if not isinstance(cfg.pattern.periodic, bool):
        raise ConfigError(f"pattern.periodic: expected true/false, got {cfg.pattern.periodic!r}")
