import math

import numpy as np
import pytest

from oracles import loglog_slope, strong_errors
from sdnf.model import FieldModel, FiringRate, LinearModel
from sdnf.sde import (IntegrationError, NoiseStream, SdeStepConfig, em_step, it15_deterministic,
                      it15_step, ito_operators, simulate_truth, wiener_pair)
from sdnf.spectral import project_initial


def test_em_deterministic_scalar():
    m = LinearModel.scalar(1.0, 0.0)
    assert em_step(0.0, np.array([1.0]), 0.1, m, np.array([0.7]))[0] == pytest.approx(0.9, abs=1e-15)


def test_em_increment_statistics():
    n = 100_000
    m = LinearModel(np.zeros((1, 1)), np.ones(1))
    delta = 0.01
    z = NoiseStream(7).normal(0, n)
    incr = np.array([em_step(0.0, np.zeros(1), delta, m, zi)[0] for zi in z[:2000]])
    assert np.allclose(incr / math.sqrt(delta), z[:2000])
    # the increments are sqrt(delta) * standard normals
    var = np.var(z, ddof=1)
    assert abs(var - 1.0) < 3 * math.sqrt(2 / (n - 1))
    assert abs(np.mean(z)) < 3 / math.sqrt(n)


def test_ito_operators_linear_scalar():
    m = LinearModel.scalar(2.0, 0.5)
    L0f, Lf = ito_operators(0.0, np.array([3.0]), m)
    assert L0f[0] == pytest.approx(4.0 * 3.0)
    assert Lf[0, 0] == pytest.approx(-2.0 * 0.5)


def test_lf_vanishes_without_noise(small_basis):
    m = FieldModel(small_basis, firing=FiringRate("logistic"), noise_level=0.0)
    _, Lf = ito_operators(0.0, np.ones(small_basis.dim), m)
    assert np.all(Lf == 0.0)


def test_l0f_matches_directional_difference(small_basis):
    m = FieldModel(small_basis, firing=FiringRate("logistic", 0.0, 5.0))
    u = np.random.default_rng(0).normal(size=small_basis.dim)
    f = m.drift(0.0, u)
    L0f, _ = ito_operators(0.0, u, m)
    for h in (1e-4, 1e-5):
        fd = (m.drift(0.0, u + h * f) - m.drift(0.0, u - h * f)) / (2 * h)
        assert np.allclose(L0f, fd, rtol=1e-5, atol=1e-7)


def test_it15_deterministic_scalar_taylor():
    a, d, u = 1.3, 0.2, 0.8
    m = LinearModel.scalar(a, 0.0)
    out = it15_step(0.0, np.array([u]), d, m, np.array([0.4]), np.array([-1.1]))
    assert out[0] == pytest.approx(u * (1 - a * d + 0.5 * a * a * d * d), abs=1e-15)


def test_it15_without_noise_is_discretized_drift(small_basis):
    m = FieldModel(small_basis, firing=FiringRate("logistic"), noise_level=0.0)
    u = np.random.default_rng(1).normal(size=small_basis.dim)
    z = np.random.default_rng(2).normal(size=(2, small_basis.dim))
    fd = it15_deterministic(0.0, u, 0.1, m)[0]
    assert np.array_equal(it15_step(0.0, u, 0.1, m, z[0], z[1]), fd)


def test_wiener_pair_covariance():
    n, d = 100_000, 0.3
    z = NoiseStream(11).normal(0, (2, n))
    dW, dZ = wiener_pair(d, z[0], z[1])
    X = np.stack([dW, dZ])
    C = np.cov(X)
    target = np.array([[d, d * d / 2], [d * d / 2, d ** 3 / 3]])
    # standard error of a sample covariance entry: sqrt((s_ii s_jj + s_ij^2) / n)
    se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target ** 2) / n)
    assert np.all(np.abs(C - target) < 3 * se)


def test_noise_stream_is_addressable():
    s = NoiseStream(5, run_index=3)
    a = s.normal(17, 4)
    assert np.array_equal(a, NoiseStream(5, run_index=3).normal(17, 4))
    assert not np.array_equal(a, s.normal(18, 4))
    assert not np.array_equal(a, NoiseStream(5, run_index=4).normal(17, 4))
    assert not np.array_equal(a, NoiseStream(5, run_index=3, purpose=1).normal(17, 4))


def test_step_config_validation():
    with pytest.raises(ValueError):
        SdeStepConfig(0.0)
    with pytest.raises(ValueError):
        SdeStepConfig(0.1, "rk4")


def test_zero_solution_stays_zero(small_basis, quiet_stimulus):
    m = FieldModel(small_basis, firing=FiringRate("heaviside", 1e3), noise_level=0.0,
                   stimulus=quiet_stimulus)
    for scheme in ("em05", "it15"):
        traj = simulate_truth(m, scheme, 0.1, 2.0, np.zeros(small_basis.dim))
        assert np.all(traj.states == 0.0)


@pytest.mark.parametrize("scheme", ["em05", "it15"])
def test_simulation_is_reproducible(logistic_model, scheme):
    u0 = np.zeros(logistic_model.basis.dim)
    a = simulate_truth(logistic_model, scheme, 0.1, 1.0, u0, seed=9, run_index=2)
    b = simulate_truth(logistic_model, scheme, 0.1, 1.0, u0, seed=9, run_index=2)
    c = simulate_truth(logistic_model, scheme, 0.1, 1.0, u0, seed=9, run_index=3)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.fields_on_mesh, b.fields_on_mesh)
    assert not np.array_equal(a.states, c.states)


def test_store_times_and_field_lookup(small_basis):
    m = FieldModel(small_basis)
    traj = simulate_truth(m, "it15", 0.1, 1.0, np.zeros(small_basis.dim), store_times=[0.0, 0.5, 1.0])
    assert traj.fields_on_mesh.shape == (3, small_basis.mesh.n_nodes)
    assert np.allclose(traj.field_at(0.5), traj.states[5] @ small_basis.V_f)
    with pytest.raises(KeyError):
        traj.field_at(0.3)


def test_simulation_rejects_bad_grid(small_basis):
    with pytest.raises(ValueError):
        simulate_truth(FieldModel(small_basis), "em05", 0.3, 1.0, np.zeros(small_basis.dim))


def test_non_finite_state_is_reported():
    m = LinearModel.scalar(1.0, 0.0)
    with pytest.raises(IntegrationError):
        em_step(0.0, np.array([np.inf]), 0.1, m, np.zeros(1))
    with pytest.raises(IntegrationError):
        it15_step(0.0, np.array([np.nan]), 0.1, m, np.zeros(1), np.zeros(1))


def test_schemes_agree_as_step_shrinks():
    a, eps = 1.0, 0.5
    m = LinearModel.scalar(a, eps)
    em = lambda u, H, z1: em_step(0.0, np.array([u]), H, m, np.array([z1]))[0]
    it = lambda u, H, z1, z2: it15_step(0.0, np.array([u]), H, m, np.array([z1]), np.array([z2]))[0]
    e_em, e_it = strong_errors(em, it, a, eps, [3, 5], paths=40, fine=7)
    assert e_em[1] < e_em[0] and e_it[1] < e_it[0]


@pytest.mark.slow
def test_observed_strong_orders_on_additive_linear_test():
    # with additive noise and linear drift both schemes gain one order
    a, eps = 1.0, 1.0
    m = LinearModel.scalar(a, eps)
    em = lambda u, H, z1: em_step(0.0, np.array([u]), H, m, np.array([z1]))[0]
    it = lambda u, H, z1, z2: it15_step(0.0, np.array([u]), H, m, np.array([z1]), np.array([z2]))[0]
    levels = [3, 4, 5, 6, 7]
    e_em, e_it = strong_errors(em, it, a, eps, levels, paths=100)
    deltas = 2.0 ** -np.array(levels)
    assert loglog_slope(deltas, e_em) == pytest.approx(1.0, abs=0.2)
    assert loglog_slope(deltas, e_it) == pytest.approx(2.0, abs=0.2)


def test_narrow_and_wide_stimulus_bump_counts(desk_basis):
    from sdnf.model import StimulusSpec
    from sdnf.pattern import count_bumps
    u0 = project_initial(np.zeros(desk_basis.mesh.n_nodes), desk_basis)
    for width, expected in ((3.0, 1), (13.0, 2)):
        m = FieldModel(desk_basis, stimulus=StimulusSpec(width=width))
        counts = [count_bumps(simulate_truth(m, "it15", 0.1, 10.0, u0, seed=1, run_index=r)
                              .fields_on_mesh[-1]).count for r in range(5)]
        assert counts == [expected] * 5
