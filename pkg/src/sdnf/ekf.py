"""Continuous-discrete extended Kalman filters for the projected neural field.

The time update integrates the mean and covariance over ``L_sub`` sub-steps of
length ``delta = dt / L_sub`` with either the Euler-Maruyama (``em05``) or the
Ito-Taylor 1.5 (``it15``) discretization; the measurement update is the
standard linear Kalman correction against the sensor rows of V_f^T.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .model import FieldModel
from .sde import SCHEMES, it15_deterministic
from .spectral import SpectralBasis, synthesize_field

log = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8


@dataclass(frozen=True)
class StateEstimate:
    mean: np.ndarray
    cov: np.ndarray
    t: float = 0.0


@dataclass
class CovarianceHealth:
    """Running record of covariance conditioning over a filter run."""

    max_raw_asymmetry: float = 0.0
    max_asymmetry: float = 0.0
    min_eig_ratio: float = np.inf
    clamp_events: int = 0
    worst_clamp_ratio: float = 0.0

    def merge(self, other: "CovarianceHealth") -> "CovarianceHealth":
        return CovarianceHealth(
            max(self.max_raw_asymmetry, other.max_raw_asymmetry),
            max(self.max_asymmetry, other.max_asymmetry),
            min(self.min_eig_ratio, other.min_eig_ratio),
            self.clamp_events + other.clamp_events,
            min(self.worst_clamp_ratio, other.worst_clamp_ratio),
        )


def condition_covariance(P: np.ndarray, health: CovarianceHealth | None = None) -> np.ndarray:
    """Symmetrize P and clamp negative eigenvalues beyond tolerance."""
    raw = float(np.max(np.abs(P - P.T)))
    P = 0.5 * (P + P.T)
    tr = float(np.trace(P))
    w, Q = np.linalg.eigh(P)
    ratio = w[0] / tr if tr > 0 else 0.0
    if w[0] < -PSD_TOLERANCE * abs(tr):
        log.warning("covariance lost PSD (min eig %.3e, trace %.3e); clamping", w[0], tr)
        P = (Q * np.clip(w, 0.0, None)) @ Q.T
        P = 0.5 * (P + P.T)
        if health is not None:
            health.clamp_events += 1
            health.worst_clamp_ratio = min(health.worst_clamp_ratio, ratio)
    if health is not None:
        health.max_raw_asymmetry = max(health.max_raw_asymmetry, raw)
        health.max_asymmetry = max(health.max_asymmetry, float(np.max(np.abs(P - P.T))))
        health.min_eig_ratio = min(health.min_eig_ratio, ratio)
    return P


@dataclass(frozen=True)
class SensorLayout:
    sensor_indices: np.ndarray
    H: np.ndarray
    spacing: float

    @classmethod
    def from_spacing(cls, basis: SpectralBasis, spacing: float) -> "SensorLayout":
        """Sensors at nodes 0, k, 2k, ... with k = spacing / h_x."""
        ratio = spacing / basis.h_x
        stride = int(round(ratio))
        if stride < 1 or abs(stride - ratio) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"sensor spacing {spacing} is not a multiple of h_x={basis.h_x}")
        idx = np.arange(0, basis.mesh.n_nodes, stride)
        return cls.from_indices(basis, idx, spacing)

    @classmethod
    def from_indices(cls, basis: SpectralBasis, indices, spacing: float = float("nan")):
        idx = np.asarray(indices, dtype=int)
        if idx.ndim != 1 or len(idx) == 0:
            raise ValueError("need at least one sensor")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= basis.mesh.n_nodes:
            raise ValueError("sensor indices must be strictly increasing mesh node indices")
        return cls(idx, basis.V_f[:, idx].T.copy(), spacing)

    @property
    def m(self) -> int:
        return len(self.sensor_indices)


@dataclass(frozen=True)
class MeasurementSet:
    times: np.ndarray
    layout: SensorLayout
    readings: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        if len(self.times) > 1:
            d = np.diff(self.times)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d[0]:
                raise ValueError("measurement times must be equally spaced and increasing")
        if np.any(np.diag(self.R) <= 0):
            raise ValueError("measurement noise variances must be positive")
        if self.readings.shape != (len(self.times), self.layout.m):
            raise ValueError(f"readings shape {self.readings.shape} does not match "
                             f"({len(self.times)}, {self.layout.m})")

    @property
    def sampling_period(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else float(self.times[0])


@dataclass(frozen=True)
class FilterConfig:
    scheme: str = "it15"
    subdivisions: int = 1
    pi0_scale: float = 0.1
    surrogate_steepness: float = 20.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.subdivisions < 1:
            raise ValueError("subdivisions must be >= 1")
        if not (self.pi0_scale > 0 and self.surrogate_steepness > 0):
            raise ValueError("pi0_scale and surrogate_steepness must be > 0")


def time_update_em(est: StateEstimate, dt: float, L_sub: int, model: FieldModel,
                   health: CovarianceHealth | None = None) -> StateEstimate:
    """Euler-Maruyama prediction: u += d f, P <- (I + d J) P (I + d J)^T + d G G^T."""
    delta = dt / L_sub
    u, P, t = est.mean, est.cov, est.t
    I = np.eye(len(u))
    GG = np.diag(model.G ** 2)
    for _ in range(L_sub):
        J = model.jacobian(t, u)
        A = I + delta * J
        u = u + delta * model.drift(t, u)
        P = condition_covariance(A @ P @ A.T + delta * GG, health)
        t = t + delta
    return StateEstimate(u, P, t)


def time_update_it15(est: StateEstimate, dt: float, L_sub: int, model: FieldModel,
                     health: CovarianceHealth | None = None) -> StateEstimate:
    """Ito-Taylor 1.5 prediction.

    Mean: u <- f_d(t, u).  Covariance:
    J_fd P J_fd^T + d^2/2 (G Lf^T + Lf G^T) + d^3/3 Lf Lf^T + d G G^T,
    with J_fd = I + d J + d^2/2 J J (second derivatives of f dropped).
    """
    delta = dt / L_sub
    u, P, t = est.mean, est.cov, est.t
    I = np.eye(len(u))
    G = np.diag(model.G)
    GG = G @ G.T
    for _ in range(L_sub):
        fd, _, J, Lf = it15_deterministic(t, u, delta, model)
        Jfd = I + delta * J + 0.5 * delta ** 2 * (J @ J)
        cross = G @ Lf.T
        P = (Jfd @ P @ Jfd.T
             + 0.5 * delta ** 2 * (cross + cross.T)
             + delta ** 3 / 3.0 * (Lf @ Lf.T)
             + delta * GG)
        P = condition_covariance(P, health)
        u = fd
        t = t + delta
    return StateEstimate(u, P, t)


@dataclass(frozen=True)
class Innovation:
    residual: np.ndarray
    Re: np.ndarray
    gain: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.residual))

    @property
    def nis(self) -> float:
        """Normalized innovation squared r^T Re^{-1} r."""
        return float(self.residual @ linalg.solve(self.Re, self.residual, assume_a="pos"))


def measurement_update(pred: StateEstimate, z, layout: SensorLayout, R,
                       health: CovarianceHealth | None = None):
    """Kalman correction; returns (updated estimate, innovation diagnostics)."""
    H = layout.H
    P = pred.cov
    R = np.asarray(R, dtype=float)
    Re = H @ P @ H.T + R
    Re = 0.5 * (Re + Re.T)
    try:
        c = linalg.cho_factor(Re)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"innovation covariance not invertible (cond ~ {np.linalg.cond(Re):.3e})") from exc
    gain = linalg.cho_solve(c, H @ P).T
    r = np.asarray(z, dtype=float) - H @ pred.mean
    mean = pred.mean + gain @ r
    P_new = (np.eye(len(mean)) - gain @ H) @ P
    P_new = condition_covariance(P_new, health)
    return StateEstimate(mean, P_new, pred.t), Innovation(r, Re, gain)


TIME_UPDATES = {"em05": time_update_em, "it15": time_update_it15}


@dataclass
class Reconstruction:
    scheme: str
    estimates: list[StateEstimate]
    fields: np.ndarray
    innovations: list[Innovation]
    health: CovarianceHealth = field(default_factory=CovarianceHealth)

    def __iter__(self):
        return iter(zip(self.estimates, self.fields))

    def __len__(self):
        return len(self.estimates)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.estimates])

    @property
    def cov_traces(self) -> np.ndarray:
        return np.array([np.trace(e.cov) for e in self.estimates])

    @property
    def innovation_norms(self) -> np.ndarray:
        return np.array([i.norm for i in self.innovations])

    @property
    def nis(self) -> np.ndarray:
        return np.array([i.nis for i in self.innovations])

    @property
    def final_field(self) -> np.ndarray:
        return self.fields[-1]


def reconstruct(meas: MeasurementSet, model: FieldModel, cfg: FilterConfig, u0_estimate,
                t0: float = 0.0) -> Reconstruction:
    """Filter the whole measurement history starting from (u0_estimate, pi0 I) at t0.

    The filter always runs on the logistic surrogate of the firing rate.
    """
    fmodel = model.filter_model(cfg.surrogate_steepness)
    update = TIME_UPDATES[cfg.scheme]
    dim = model.basis.dim
    est = StateEstimate(np.asarray(u0_estimate, dtype=float).copy(), cfg.pi0_scale * np.eye(dim), t0)
    health = CovarianceHealth()
    estimates, innovations = [], []
    for tk, z in zip(meas.times, meas.readings):
        dt = tk - est.t
        if dt <= 0:
            raise ValueError(f"measurement at t={tk} does not follow t={est.t}")
        pred = update(est, dt, cfg.subdivisions, fmodel, health)
        pred = replace(pred, t=float(tk))
        est, innov = measurement_update(pred, z, meas.layout, meas.R, health)
        estimates.append(est)
        innovations.append(innov)
    fields = synthesize_field(np.array([e.mean for e in estimates]), model.basis)
    return Reconstruction(cfg.scheme, estimates, fields, innovations, health)


def simulate_measurements(fields: np.ndarray, times: Sequence[float], layout: SensorLayout,
                          R_filter: np.ndarray, noise: np.ndarray) -> MeasurementSet:
    """Sample mesh fields at the sensors and add pre-drawn measurement noise."""
    fields = np.asarray(fields)
    readings = fields[:, layout.sensor_indices] + noise
    return MeasurementSet(np.asarray(times, dtype=float), layout, readings, R_filter)
