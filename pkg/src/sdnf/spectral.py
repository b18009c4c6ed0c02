"""Cosine Karhunen-Loeve basis on a symmetric periodic interval [-L, L].

The membrane potential is represented as ``u(x, t) = sum_k u_k(t) v_k(x)`` with
``v_0 = 1/sqrt(2L)`` and ``v_k = cos(k pi x / L) / sqrt(L)``.  Only the even
(cosine) modes are kept, since the fields of interest are symmetric.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Raised when discretization parameters are inconsistent."""


@dataclass(frozen=True)
class SpatialMesh:
    """Equidistant mesh x_i = -L + i*h_x, i = 0..N, on [-L, L]."""

    half_length: float
    n_subdivisions: int

    def __post_init__(self):
        if not self.half_length > 0:
            raise ConfigurationError(f"half_length must be > 0, got {self.half_length}")
        if int(self.n_subdivisions) != self.n_subdivisions or self.n_subdivisions < 2:
            raise ConfigurationError(f"n_subdivisions must be an integer >= 2, got {self.n_subdivisions}")

    @property
    def step(self) -> float:
        return 2.0 * self.half_length / self.n_subdivisions

    @property
    def nodes(self) -> np.ndarray:
        i = np.arange(self.n_subdivisions + 1)
        return -self.half_length + i * self.step

    @property
    def n_nodes(self) -> int:
        return self.n_subdivisions + 1

    def trapezoid_weights(self) -> np.ndarray:
        w = np.ones(self.n_nodes)
        w[0] = w[-1] = 0.5
        return w


def eigenvalue(l: int, xi: float) -> float:
    """Noise amplitude of mode ``l`` for spatial correlation length ``xi``.

    This is ``sqrt(exp(-xi^2 l^2 / (4 pi)))``, i.e. ``exp(-xi^2 l^2 / (8 pi))``.
    """
    if not xi > 0:
        raise ValueError(f"correlation length must be > 0, got {xi}")
    if l < 0:
        raise ValueError(f"mode index must be non-negative, got {l}")
    return math.exp(-(xi * l) ** 2 / (8.0 * math.pi))


def basis_functions(x: np.ndarray, n_modes: int, half_length: float) -> np.ndarray:
    """Evaluate v_0..v_K at points ``x``; returns shape (K+1, len(x))."""
    x = np.asarray(x, dtype=float)
    k = np.arange(n_modes + 1)[:, None]
    out = np.cos(k * np.pi * x[None, :] / half_length) / math.sqrt(half_length)
    out[0, :] = 1.0 / math.sqrt(2.0 * half_length)
    return out


@dataclass(frozen=True)
class SpectralBasis:
    """Cosine basis evaluated on a mesh together with the noise amplitudes.

    ``V_f`` has one row per mode and one column per mesh node.  ``V`` is
    ``V_f`` without its last column; with periodic boundary conditions the
    node ``x_N = L`` duplicates ``x_0 = -L``, so sums over the first N nodes
    with weight ``h_x`` are the periodic trapezoid rule.
    """

    n_modes: int
    mesh: SpatialMesh
    correlation_length: float
    V_f: np.ndarray = field(repr=False)
    Lambda: np.ndarray = field(repr=False)

    @property
    def V(self) -> np.ndarray:
        return self.V_f[:, :-1]

    @property
    def dim(self) -> int:
        return self.n_modes + 1

    @property
    def h_x(self) -> float:
        return self.mesh.step

    def gram(self) -> np.ndarray:
        """Trapezoid-rule Gram matrix h_x * V_f W V_f^T of the basis rows."""
        w = self.mesh.trapezoid_weights()
        return self.h_x * (self.V_f * w) @ self.V_f.T


def build_basis(L: float, N: int, K: int, xi: float) -> SpectralBasis:
    """Construct the cosine basis with K+1 modes on an N-interval mesh of [-L, L].

    Requires N > 2K; at N = 2K the top mode aliases with itself on the mesh
    and the discrete Gram matrix is no longer the identity.
    """
    if K < 1:
        raise ConfigurationError(f"n_modes must be >= 1, got {K}")
    mesh = SpatialMesh(float(L), int(N))
    if N <= 2 * K:
        raise ConfigurationError(
            f"mesh too coarse for the basis: need N > 2K, got N={N}, K={K}")
    V_f = basis_functions(mesh.nodes, K, mesh.half_length)
    V_f.setflags(write=False)
    lam = np.array([eigenvalue(k, xi) for k in range(K + 1)])
    lam.setflags(write=False)
    return SpectralBasis(K, mesh, float(xi), V_f, lam)


def project_initial(u0_on_mesh, basis: SpectralBasis) -> np.ndarray:
    """Least-squares spectral coefficients (V_f V_f^T)^{-1} V_f u0."""
    u0 = np.asarray(u0_on_mesh, dtype=float)
    if u0.shape != (basis.mesh.n_nodes,):
        raise ValueError(f"expected field of length {basis.mesh.n_nodes}, got shape {u0.shape}")
    normal = basis.V_f @ basis.V_f.T
    try:
        factor = linalg.cho_factor(normal)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"normal matrix V_f V_f^T is singular (cond ~ {np.linalg.cond(normal):.3e})") from exc
    log.debug("project_initial: cond(V_f V_f^T) = %.3e", np.linalg.cond(normal))
    return linalg.cho_solve(factor, basis.V_f @ u0)


def synthesize_field(u, basis: SpectralBasis) -> np.ndarray:
    """Membrane potential V_f^T u on all N+1 mesh nodes."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != basis.dim:
        raise ValueError(f"expected {basis.dim} coefficients, got {u.shape[-1]}")
    return u @ basis.V_f
