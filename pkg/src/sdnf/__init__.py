"""Stochastic dynamic neural field simulation and EKF-based reconstruction.

The membrane potential of a 1-D stochastic neural field is discretized with a
cosine Karhunen-Loeve basis, simulated with Euler-Maruyama or Ito-Taylor 1.5
integrators, reconstructed from sparse noisy sensors with two extended Kalman
filters, and scored by counting activity bumps.
"""

from .ekf import (FilterConfig, MeasurementSet, SensorLayout, StateEstimate, measurement_update,
                  reconstruct, time_update_em, time_update_it15)
from .model import (ConnectivityParams, FieldModel, FiringRate, LinearModel, StimulusSpec,
                    connectivity, drift, drift_jacobian, stimulus)
from .pattern import BumpPattern, MismatchTable, count_bumps, mismatch_table
from .sde import Trajectory, em_step, it15_step, ito_operators, simulate_truth
from .spectral import (SpatialMesh, SpectralBasis, build_basis, eigenvalue, project_initial,
                       synthesize_field)

__version__ = "0.1.0"
