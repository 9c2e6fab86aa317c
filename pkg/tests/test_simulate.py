import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from graphheat import control_op, moment, simulate, spectral
from graphheat.errors import NonFiniteState, StepTooLarge


@pytest.fixture(scope="module")
def model(uneven, cos_op):
    spec = spectral.compute_spectrum(uneven, 6)
    return spec.lambdas, control_op.coupling_matrix(cos_op, spec, 6)


def test_free_evolution():
    c = simulate.free_evolution([1.0, 2.0], [0.0, 3.0], 0.5)
    np.testing.assert_allclose(c, [1.0, 2 * math.exp(-1.5)])
    with pytest.raises(ValueError):
        simulate.free_evolution([1.0], [0.0], -1)


def test_constant_control_is_matrix_exponential(model):
    lam, M = model
    c0 = np.eye(6)[0] + 0.1 * np.eye(6)[1]
    tr = simulate.evolve_bilinear(c0, 0.8, lam, M, T=0.4)
    exact = expm(-0.4 * (np.diag(lam) + 0.8 * M)) @ c0
    np.testing.assert_allclose(tr.final, exact, atol=1e-8)


def test_against_adaptive_ode(model):
    lam, M = model
    c0 = np.linspace(1, 0.5, 6)
    u = lambda t: 3 * np.sin(5 * t)
    tr = simulate.evolve_bilinear(c0, u, lam, M, T=0.5)
    ref = solve_ivp(lambda t, c: -(lam * c) - u(t) * (M @ c), (0, 0.5), c0, rtol=1e-12, atol=1e-14, method="DOP853")
    np.testing.assert_allclose(tr.final, ref.y[:, -1], atol=1e-7)


def test_second_order_convergence(model):
    lam, M = model
    c0 = np.ones(6)
    u = lambda t: 4 * np.cos(3 * t)
    ref = simulate.evolve_bilinear(c0, u, lam, M, T=0.5, dt=1e-4).final
    e1 = np.linalg.norm(simulate.evolve_bilinear(c0, u, lam, M, T=0.5, dt=4e-3).final - ref)
    e2 = np.linalg.norm(simulate.evolve_bilinear(c0, u, lam, M, T=0.5, dt=2e-3).final - ref)
    assert 3.5 < e1 / e2 < 4.5


def test_step_guard(model):
    lam, M = model
    with pytest.raises(StepTooLarge):
        simulate.evolve_bilinear(np.ones(6), 0.0, lam, M, T=1.0, dt=1.0)


def test_non_finite_state(model):
    lam, M = model
    with pytest.raises(NonFiniteState):
        simulate.evolve_bilinear(np.ones(6), -1e6, lam, M, T=1.0, dt=1e-3)


def test_linearized_matches_bilinear_for_small_controls(model):
    lam, M = model
    T = 0.5
    shifted = lam - lam[0]
    z0 = np.zeros(6)
    u = moment.ControlSignal(shifted, T, tuple(1e-4 * np.ones(6)), 0.0)
    lin = simulate.evolve_linearized(z0, u, shifted, M[:, 0], T)
    c0 = np.eye(6)[0]
    full = simulate.evolve_bilinear(c0, u, lam, M, T=T).final
    # bilinear state = phi_1 + z up to second order in u
    np.testing.assert_allclose(full - c0 * math.exp(-lam[0] * T), lin, atol=1e-8)


def test_sampled_and_signal_linearized_agree(model):
    lam, M = model
    shifted = lam - lam[0]
    u = moment.ControlSignal(shifted, 0.5, (0.3, -0.2, 0.1, 0.0, 0.05, 0.01), 0.0)
    _, vals = u.samples(2000)
    a = simulate.evolve_linearized(np.ones(6), u, shifted, M[:, 0], 0.5)
    b = simulate.evolve_linearized(np.ones(6), vals, shifted, M[:, 0], 0.5)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_tangent_matches_finite_differences(model):
    lam, M = model
    T = 0.3
    n_steps, h = simulate.midpoint_grid(T, lam, dt=1e-3)
    t = (np.arange(n_steps) + 0.5) * h
    basis = np.column_stack([np.ones_like(t), np.cos(4 * t)])
    alpha = np.array([0.5, -1.0])
    c0 = np.eye(6)[0] + 0.05
    c, J = simulate.bilinear_tangent(c0, basis @ alpha, basis, lam, M, h)
    eps = 1e-6
    for i in range(2):
        da = np.zeros(2)
        da[i] = eps
        cp, _ = simulate.bilinear_tangent(c0, basis @ (alpha + da), basis, lam, M, h)
        cm, _ = simulate.bilinear_tangent(c0, basis @ (alpha - da), basis, lam, M, h)
        np.testing.assert_allclose((cp - cm) / (2 * eps), J[:, i], atol=1e-8)


def test_spillover_tracks_high_modes(model):
    lam, M = model
    tr = simulate.evolve_bilinear(np.eye(6)[0], 2.0, lam, M, T=0.2, design_modes=3, store_every=50)
    assert tr.spillover()[0] == 0.0 and tr.spillover()[-1] > 0
