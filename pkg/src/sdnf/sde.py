"""Strong integrators for the projected SDE du = f(t, u) dt + G dbeta.

Two schemes are provided:

* ``em05``: Euler-Maruyama, u + d f + G dW.
* ``it15``: Ito-Taylor order 1.5 for additive noise,
  u + d f + d^2/2 L0f + G dW + Lf dZ, where dZ = int_t^{t+d} (W(s) - W(t)) ds.

Noise comes from counter-based Philox streams keyed by (master seed, run
index, purpose) with the step number in the counter, so a given step of a
given run always sees the same numbers, independent of execution order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .model import FieldModel
from .spectral import synthesize_field

log = logging.getLogger(__name__)

Scheme = Literal["em05", "it15"]
SCHEMES: tuple[str, ...] = ("em05", "it15")

DIVERGENCE_LIMIT = 1e6

# stream purposes
TRUTH_NOISE = 0
MEASUREMENT_NOISE = 1


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseStream:
    """Standard-normal draws addressed by (seed, run, purpose, step)."""

    master_seed: int
    run_index: int = 0
    purpose: int = TRUTH_NOISE

    def _key(self) -> np.ndarray:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.run_index, self.purpose))
        return ss.generate_state(2, dtype=np.uint64)

    def generator(self, step: int) -> np.random.Generator:
        counter = np.array([0, 0, step, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key(), counter=counter))

    def normal(self, step: int, size) -> np.ndarray:
        return self.generator(step).standard_normal(size)


@dataclass(frozen=True)
class SdeStepConfig:
    step: float
    scheme: Scheme = "it15"
    stream: NoiseStream = NoiseStream(0)

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    field_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    fields_on_mesh: np.ndarray | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def field_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.field_times - t)))
        if self.fields_on_mesh is None or abs(self.field_times[i] - t) > 1e-9:
            raise KeyError(f"no stored field at t={t}")
        return self.fields_on_mesh[i]


def _check(u, t):
    if not np.all(np.isfinite(u)):
        raise IntegrationError(f"non-finite state at t={t:.6g}")
    return u


def em_step(t: float, u, delta: float, model: FieldModel, zeta) -> np.ndarray:
    if not delta > 0:
        raise ValueError("step must be > 0")
    u = np.asarray(u, dtype=float)
    f = model.drift(t, u)
    if not np.all(np.isfinite(f)):
        raise IntegrationError(f"non-finite drift at t={t:.6g}")
    return _check(u + delta * f + math.sqrt(delta) * model.G * zeta, t)


def ito_operators(t: float, u, model: FieldModel, f=None, J=None):
    """Return (L0f, Lf) for additive diagonal noise.

    ``L0f = h_x V dI/dt + J f``; the Hessian term of L0 is not included.
    Column j of ``Lf`` is ``G_jj`` times column j of J.
    """
    if f is None:
        f = model.drift(t, u)
    if J is None:
        J = model.jacobian(t, u)
    L0f = model.input_rate(t) + J @ f
    Lf = J * model.G[None, :]
    return L0f, Lf


def wiener_pair(delta: float, zeta1, zeta2):
    """Correlated increments (dW, dZ) from two independent standard normals."""
    dW = math.sqrt(delta) * np.asarray(zeta1)
    dZ = 0.5 * delta ** 1.5 * (np.asarray(zeta1) + np.asarray(zeta2) / math.sqrt(3.0))
    return dW, dZ


def it15_deterministic(t: float, u, delta: float, model: FieldModel):
    """Discretized drift f_d = u + d f + d^2/2 L0f; also returns f, J, Lf."""
    u = np.asarray(u, dtype=float)
    f = model.drift(t, u)
    J = model.jacobian(t, u)
    L0f, Lf = ito_operators(t, u, model, f, J)
    fd = u + delta * f + 0.5 * delta ** 2 * L0f
    return fd, f, J, Lf


def it15_step(t: float, u, delta: float, model: FieldModel, zeta1, zeta2) -> np.ndarray:
    if not delta > 0:
        raise ValueError("step must be > 0")
    fd, _, _, Lf = it15_deterministic(t, u, delta, model)
    dW, dZ = wiener_pair(delta, zeta1, zeta2)
    return _check(fd + model.G * dW + Lf @ dZ, t)


def simulate_truth(model: FieldModel, scheme: Scheme, h_t: float, T: float, u0,
                   seed: int = 0, run_index: int = 0,
                   store_times: Sequence[float] | None = None) -> Trajectory:
    """Integrate from t=0 to T with fixed step h_t.

    Mesh fields are kept only at ``store_times`` (default: the final time).
    """
    if not (T > 0 and h_t > 0):
        raise ValueError("T and h_t must be positive")
    cfg = SdeStepConfig(h_t, scheme, NoiseStream(seed, run_index, TRUTH_NOISE))
    n_steps = int(round(T / h_t))
    if abs(n_steps * h_t - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a multiple of h_t={h_t}")
    dim = model.basis.dim
    times = np.arange(n_steps + 1) * h_t
    states = np.empty((n_steps + 1, dim))
    states[0] = np.asarray(u0, dtype=float)
    store = np.asarray([T] if store_times is None else store_times, dtype=float)
    store_steps = {int(round(s / h_t)): i for i, s in enumerate(store)}
    fields = np.empty((len(store), model.basis.mesh.n_nodes))
    if 0 in store_steps:
        fields[store_steps[0]] = synthesize_field(states[0], model.basis)

    u = states[0]
    for n in range(n_steps):
        t = times[n]
        if scheme == "em05":
            zeta = cfg.stream.normal(n, dim)
            u = em_step(t, u, h_t, model, zeta)
        else:
            zeta = cfg.stream.normal(n, (2, dim))
            u = it15_step(t, u, h_t, model, zeta[0], zeta[1])
        if np.max(np.abs(u)) > DIVERGENCE_LIMIT:
            raise IntegrationError(
                f"trajectory diverged at t={times[n + 1]:.6g}: max|u|={np.max(np.abs(u)):.3e}")
        states[n + 1] = u
        if n + 1 in store_steps:
            fields[store_steps[n + 1]] = synthesize_field(u, model.basis)
    return Trajectory(times, states, store, fields)
