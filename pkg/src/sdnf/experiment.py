"""Twin experiments, Monte Carlo studies and sensor-spacing sweeps."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import yaml

from . import config as _config
from .config import ExperimentConfig
from .ekf import (CovarianceHealth, FilterConfig, MeasurementSet, Reconstruction, SensorLayout,
                  reconstruct, simulate_measurements)
from .model import ConnectivityParams, FieldModel, FiringRate, StimulusSpec
from .pattern import MismatchTable, count_bumps, mismatch_table
from .sde import MEASUREMENT_NOISE, IntegrationError, NoiseStream, Trajectory, simulate_truth
from .spectral import build_basis, project_initial

log = logging.getLogger(__name__)


def build_model(cfg: ExperimentConfig) -> FieldModel:
    m, d = cfg.model, cfg.discretization
    basis = build_basis(m.half_length, d.n_subdivisions, d.n_modes, m.correlation_length)
    return FieldModel(
        basis,
        decay=m.decay,
        firing=FiringRate("heaviside", m.threshold, cfg.filter.surrogate_steepness, m.heaviside_tie),
        noise_level=m.noise_level,
        connectivity=ConnectivityParams(**vars(m.connectivity)),
        stimulus=StimulusSpec(**vars(m.stimulus)),
        surrogate_steepness=cfg.filter.surrogate_steepness,
    )


@lru_cache(maxsize=4)
def _cached_model(cfg_yaml: str) -> FieldModel:
    return build_model(_config.from_dict(yaml.safe_load(cfg_yaml)))


def model_for(cfg: ExperimentConfig) -> FieldModel:
    """Build (or reuse) the model; the kernel matrix is the expensive part."""
    return _cached_model(cfg.dump())


def measurement_times(cfg: ExperimentConfig) -> np.ndarray:
    o, d = cfg.observation, cfg.discretization
    n = int(np.floor(d.T / o.dt + 1e-9))
    return o.dt * np.arange(1, n + 1)


def filter_config(cfg: ExperimentConfig, scheme: str) -> FilterConfig:
    f = cfg.filter
    return FilterConfig(scheme, f.subdivisions, f.pi0_scale, f.surrogate_steepness)


@dataclass
class RunRecord:
    run_index: int
    seed: int
    truth_bumps: int = -1
    bumps: dict[str, int] = field(default_factory=dict)
    rmse: dict[str, np.ndarray] = field(default_factory=dict)
    health: dict[str, CovarianceHealth] = field(default_factory=dict)
    wall_time: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class TwinResult:
    truth: Trajectory
    measurements: MeasurementSet
    reconstructions: dict[str, Reconstruction]
    record: RunRecord


def _measurement_noise(cfg: ExperimentConfig, run_index: int, n_times: int, n_nodes: int) -> np.ndarray:
    """Per-node measurement noise for every sampling instant (sensor columns are picked later)."""
    o = cfg.observation
    stream = NoiseStream(cfg.monte_carlo.master_seed, run_index, MEASUREMENT_NOISE)
    sd = np.sqrt(o.r_scale * o.noise_mismatch)
    return sd * np.stack([stream.normal(k, n_nodes) for k in range(n_times)])


def _bumps(cfg, field_on_mesh) -> int:
    p = cfg.pattern
    return count_bumps(field_on_mesh, cfg.model.threshold, p.min_width, p.periodic).count


def _run(cfg: ExperimentConfig, run_index: int, dx_values, schemes, model: FieldModel):
    """Simulate one truth and filter it for every sensor spacing and scheme."""
    d = cfg.discretization
    times = measurement_times(cfg)
    basis = model.basis
    u0 = project_initial(np.zeros(basis.mesh.n_nodes), basis)
    truth = simulate_truth(model, d.truth_scheme, d.h_t, d.T, u0, cfg.monte_carlo.master_seed,
                           run_index, store_times=times)
    noise = _measurement_noise(cfg, run_index, len(times), basis.mesh.n_nodes)
    truth_bumps = _bumps(cfg, truth.fields_on_mesh[-1])
    R = cfg.observation.r_scale
    out = []
    for dx in dx_values:
        layout = SensorLayout.from_spacing(basis, dx)
        meas = simulate_measurements(truth.fields_on_mesh, times, layout, R * np.eye(layout.m),
                                     noise[:, layout.sensor_indices])
        recs = {sc: reconstruct(meas, model, filter_config(cfg, sc), u0) for sc in schemes}
        out.append((truth, meas, recs, truth_bumps))
    return out


def _record(cfg, run_index, truth, recs, truth_bumps, wall) -> RunRecord:
    rec = RunRecord(run_index, cfg.monte_carlo.master_seed, truth_bumps, wall_time=wall)
    for sc, r in recs.items():
        rec.bumps[sc] = _bumps(cfg, r.final_field)
        rec.rmse[sc] = np.sqrt(np.mean((r.fields - truth.fields_on_mesh) ** 2, axis=1))
        rec.health[sc] = r.health
    return rec


def run_twin_experiment(cfg: ExperimentConfig, run_index: int = 0, schemes=None,
                        model: FieldModel | None = None) -> TwinResult:
    """Truth -> sparse noisy measurements -> filter(s) -> bump scores."""
    model = model or model_for(cfg)
    schemes = list(schemes or cfg.filter.schemes)
    t0 = time.perf_counter()
    (truth, meas, recs, tb), = _run(cfg, run_index, [cfg.observation.dx], schemes, model)
    record = _record(cfg, run_index, truth, recs, tb, time.perf_counter() - t0)
    return TwinResult(truth, meas, recs, record)


def _sweep_worker(args) -> list[RunRecord]:
    cfg_yaml, run_index, dx_values = args
    cfg = _config.from_dict(yaml.safe_load(cfg_yaml))
    return _sweep_one(cfg, run_index, dx_values, model_for(cfg))


def _sweep_one(cfg, run_index, dx_values, model) -> list[RunRecord]:
    t0 = time.perf_counter()
    try:
        results = _run(cfg, run_index, dx_values, cfg.filter.schemes, model)
    except (IntegrationError, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("run %d failed: %s", run_index, exc)
        return [RunRecord(run_index, cfg.monte_carlo.master_seed, error=str(exc)) for _ in dx_values]
    wall = (time.perf_counter() - t0) / len(dx_values)
    return [_record(cfg, run_index, truth, recs, tb, wall) for truth, _, recs, tb in results]


def _map_runs(cfg: ExperimentConfig, dx_values) -> list[list[RunRecord]]:
    """Run every Monte Carlo index; result [i][j] is run i at spacing j."""
    M = cfg.monte_carlo.runs
    workers = cfg.monte_carlo.workers
    if workers <= 1:
        model = model_for(cfg)
        return [_sweep_one(cfg, i, dx_values, model) for i in range(M)]
    payload = cfg.dump()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_sweep_worker, [(payload, i, tuple(dx_values)) for i in range(M)],
                                chunksize=max(1, M // (4 * workers))))
    return sorted(results, key=lambda rs: rs[0].run_index)


@dataclass
class MonteCarloResult:
    tables: dict[str, MismatchTable]
    records: list[RunRecord]

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.records)

    @property
    def truth_counts(self) -> list[int]:
        return [r.truth_bumps for r in self.records if r.ok]

    def health(self) -> CovarianceHealth:
        h = CovarianceHealth()
        for r in self.records:
            for v in r.health.values():
                h = h.merge(v)
        return h


def _tables(cfg, records: list[RunRecord]) -> dict[str, MismatchTable]:
    ok = [r for r in records if r.ok]
    truth = [r.truth_bumps for r in ok]
    return {sc: mismatch_table(truth, [r.bumps[sc] for r in ok]) for sc in cfg.filter.schemes}


def run_monte_carlo(cfg: ExperimentConfig) -> MonteCarloResult:
    records = [rs[0] for rs in _map_runs(cfg, [cfg.observation.dx])]
    result = MonteCarloResult(_tables(cfg, records), records)
    if result.failures:
        log.warning("%d of %d runs failed", result.failures, len(records))
    return result


@dataclass
class SweepResult:
    dx_values: list[float]
    results: list[MonteCarloResult]

    def totals(self) -> list[tuple[float, dict[str, int]]]:
        return [(dx, {sc: t.total_mismatch for sc, t in r.tables.items()})
                for dx, r in zip(self.dx_values, self.results)]


def run_spacing_sweep(cfg: ExperimentConfig, dx_values=None) -> SweepResult:
    """Monte Carlo over several sensor spacings; each run's truth is shared by all spacings."""
    dx_values = list(dx_values if dx_values is not None else (cfg.sweep.dx or [cfg.observation.dx]))
    for dx in dx_values:
        _config.validate(cfg.with_overrides(observation={"dx": dx}))
    per_run = _map_runs(cfg, dx_values)
    results = []
    for j in range(len(dx_values)):
        records = [rs[j] for rs in per_run]
        results.append(MonteCarloResult(_tables(cfg, records), records))
    return SweepResult(dx_values, results)
