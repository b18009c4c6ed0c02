"""Stochastic neural field physics projected onto the cosine basis.

The projected drift is

    f(t, u) = h_x V I(x, t) - alpha u + h_x^2 V F s(u),
    s_i     = S(u^T V_i - theta),

with ``F`` the (symmetric) matrix of kernel samples F(|x_j - x_i|) over the
first N mesh nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import expit

from .spectral import SpectralBasis


@dataclass(frozen=True)
class ConnectivityParams:
    amplitude: float = 2.0
    decay: float = 0.08
    wavelength: float = 10.0

    def __post_init__(self):
        if not (self.decay > 0 and self.wavelength > 0):
            raise ValueError("connectivity decay and wavelength must be > 0")


def connectivity(d, p: ConnectivityParams):
    """Oscillatory lateral kernel A e^{-k1 d} [k1 sin(pi d/k2) + cos(pi d/k2)]."""
    d = np.asarray(d, dtype=float)
    phase = np.pi * d / p.wavelength
    return p.amplitude * np.exp(-p.decay * d) * (p.decay * np.sin(phase) + np.cos(phase))


@dataclass(frozen=True)
class StimulusSpec:
    """Gaussian input on a flat baseline, switched to ``baseline_off`` after ``switch_time``."""

    baseline_on: float = -3.39967
    baseline_off: float = -2.89967
    amplitude: float = 8.0
    center: float = 0.0
    width: float = 3.0
    switch_time: float = 5.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"stimulus width must be > 0, got {self.width}")


def stimulus(x_nodes, t: float, s: StimulusSpec) -> np.ndarray:
    x = np.asarray(x_nodes, dtype=float)
    if t <= s.switch_time:
        return s.baseline_on + s.amplitude * np.exp(-(x - s.center) ** 2 / (2.0 * s.width ** 2))
    return np.full_like(x, s.baseline_off)


def stimulus_rate(x_nodes, t: float, s: StimulusSpec) -> np.ndarray:
    """Time derivative of the stimulus; zero, since it is piecewise constant in t."""
    return np.zeros_like(np.asarray(x_nodes, dtype=float))


@dataclass(frozen=True)
class FiringRate:
    """Firing rate S(u - theta).

    ``tie_value`` is the Heaviside value at u == theta exactly.  It matters
    when the initial state sits on the threshold (u0 = theta = 0): a value of
    1 switches the whole tissue on at t = 0.
    """

    kind: Literal["heaviside", "logistic"] = "heaviside"
    threshold: float = 0.0
    steepness: float = 20.0
    tie_value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("heaviside", "logistic"):
            raise ValueError(f"unknown firing rate kind {self.kind!r}")
        if not self.steepness > 0:
            raise ValueError("steepness must be > 0")

    def __call__(self, u):
        z = np.asarray(u, dtype=float) - self.threshold
        if self.kind == "heaviside":
            return np.where(z > 0, 1.0, np.where(z == 0, self.tie_value, 0.0))
        return expit(self.steepness * z)

    def derivative(self, u):
        z = np.asarray(u, dtype=float) - self.threshold
        if self.kind == "heaviside":
            return np.zeros_like(z)
        sz = expit(self.steepness * z)
        return self.steepness * sz * (1.0 - sz)

    def as_logistic(self, steepness: float | None = None) -> "FiringRate":
        return FiringRate("logistic", self.threshold,
                          self.steepness if steepness is None else steepness, self.tie_value)


@dataclass(frozen=True, eq=False)
class FieldModel:
    """All SDNF physics needed by the integrators and the filters.

    ``surrogate_steepness`` is the logistic slope used in place of a
    Heaviside firing rate wherever a derivative of S is required.
    """

    basis: SpectralBasis
    decay: float = 1.0
    firing: FiringRate = FiringRate()
    noise_level: float = 0.05
    connectivity: ConnectivityParams = ConnectivityParams()
    stimulus: StimulusSpec = StimulusSpec()
    surrogate_steepness: float = 20.0
    F_matrix: np.ndarray = field(init=False, repr=False)
    _coupling: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError(f"decay must be > 0, got {self.decay}")
        if not self.noise_level >= 0:
            raise ValueError(f"noise level must be >= 0, got {self.noise_level}")
        x = self.basis.mesh.nodes[:-1]
        F = connectivity(np.abs(x[None, :] - x[:, None]), self.connectivity)
        F.setflags(write=False)
        coupling = self.basis.h_x ** 2 * (self.basis.V @ F)
        coupling.setflags(write=False)
        object.__setattr__(self, "F_matrix", F)
        object.__setattr__(self, "_coupling", coupling)

    @property
    def G(self) -> np.ndarray:
        """Diagonal of the diffusion matrix eps * Lambda."""
        return self.noise_level * self.basis.Lambda

    def with_firing(self, firing: FiringRate) -> "FieldModel":
        # reuse the precomputed kernel matrices
        new = object.__new__(FieldModel)
        for name in self.__dataclass_fields__:
            object.__setattr__(new, name, getattr(self, name))
        object.__setattr__(new, "firing", firing)
        return new

    def filter_model(self, steepness: float | None = None) -> "FieldModel":
        """Copy using the logistic surrogate firing rate (as the filters do)."""
        beta = self.surrogate_steepness if steepness is None else steepness
        return self.with_firing(self.firing.as_logistic(beta))

    def input_term(self, t: float) -> np.ndarray:
        x = self.basis.mesh.nodes[:-1]
        return self.basis.h_x * (self.basis.V @ stimulus(x, t, self.stimulus))

    def input_rate(self, t: float) -> np.ndarray:
        x = self.basis.mesh.nodes[:-1]
        return self.basis.h_x * (self.basis.V @ stimulus_rate(x, t, self.stimulus))

    def derivative_firing(self) -> FiringRate:
        if self.firing.kind == "logistic":
            return self.firing
        return self.firing.as_logistic(self.surrogate_steepness)

    def drift(self, t: float, u) -> np.ndarray:
        return drift(t, u, self)

    def jacobian(self, t: float, u) -> np.ndarray:
        return drift_jacobian(t, u, self)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Affine test system du = (A u + b) dt + diag(G) dbeta."""

    A: np.ndarray
    G: np.ndarray
    b: np.ndarray | None = None

    @classmethod
    def scalar(cls, decay: float, noise: float) -> "LinearModel":
        return cls(np.array([[-float(decay)]]), np.array([float(noise)]))

    def drift(self, t: float, u) -> np.ndarray:
        f = self.A @ np.asarray(u, dtype=float)
        return f if self.b is None else f + self.b

    def jacobian(self, t: float, u) -> np.ndarray:
        return np.array(self.A, dtype=float)

    def input_rate(self, t: float) -> np.ndarray:
        return np.zeros(len(self.A))

    def filter_model(self, steepness=None) -> "LinearModel":
        return self


def drift(t: float, u, m: FieldModel) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("drift evaluated at a non-finite state")
    s = m.firing(u @ m.basis.V)
    return m.input_term(t) - m.decay * u + m._coupling @ s


def drift_jacobian(t: float, u, m: FieldModel) -> np.ndarray:
    """df/du = -alpha I + h_x^2 V F diag(S') V^T.

    A Heaviside firing rate is differentiated through its logistic surrogate.
    """
    u = np.asarray(u, dtype=float)
    ds = m.derivative_firing().derivative(u @ m.basis.V)
    J = (m._coupling * ds) @ m.basis.V.T
    J[np.diag_indices_from(J)] -= m.decay
    return J


def lipschitz_bound(m: FieldModel) -> float:
    """Upper bound on the Lipschitz constant of the drift for logistic firing."""
    beta = m.derivative_firing().steepness
    V, F = m.basis.V, m.F_matrix
    nv = np.linalg.norm(V, 2)
    return m.decay + m.basis.h_x ** 2 * nv * np.linalg.norm(F, 2) * (beta / 4.0) * nv
