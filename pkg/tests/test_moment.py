import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from graphheat import moment
from graphheat.errors import DegenerateSpectrum, IllConditioned, ZeroCoupling
from graphheat.moment import MomentProblem, solve_moment


def test_gram_closed_form():
    G = moment.gram_matrix([0.0, 1.0], 2.0)
    assert G[0, 0] == pytest.approx(2.0)
    assert G[0, 1] == pytest.approx(1 - math.exp(-2.0))
    assert G[1, 1] == pytest.approx((1 - math.exp(-4.0)) / 2)


def test_degenerate_exponents():
    with pytest.raises(DegenerateSpectrum):
        moment.gram_matrix([1.0, 1.0], 1.0)
    with pytest.raises(DegenerateSpectrum):
        MomentProblem(np.array([2.0, 1.0]), 1.0, (1.0, 1.0))


def test_unknown_precision():
    with pytest.raises(ValueError):
        moment.finite_biorthogonal([0.0, 1.0], 1.0, precision="quad")


def test_single_mode_null_control():
    # z' = -b u with z(0) = 1: minimum-norm u = 1 / (b T), norm 1 / (b sqrt T)
    T, b = 0.7, 2.0
    u = solve_moment(MomentProblem(np.array([0.0]), T, (1.0 / b,)))
    assert u(0.3) == pytest.approx(1 / (b * T))
    assert u.norm == pytest.approx(1 / (b * math.sqrt(T)))
    assert moment.control_cost([0.0], [1.0], 1, T, 1) == pytest.approx(1 / math.sqrt(T))


@settings(max_examples=15, deadline=None)
@given(
    gaps=st.lists(st.floats(0.5, 6.0), min_size=1, max_size=4),
    d=st.lists(st.floats(-2.0, 2.0), min_size=5, max_size=5),
    T=st.floats(0.3, 2.0),
)
def test_moments_by_independent_quadrature(gaps, d, T):
    lam = np.concatenate([[0.0], np.cumsum(gaps)])
    targets = tuple(d[: lam.size])
    if not any(targets):
        return
    u = solve_moment(MomentProblem(lam, T, targets))
    scale = max(abs(x) for x in targets)
    for k, l in enumerate(lam):
        val, _ = quad(lambda s: math.exp(l * s) * u(s), 0.0, T, epsabs=1e-13, epsrel=1e-12, limit=200)
        # double-precision quadrature of a cancelling integrand: allow its own rounding scale
        mag, _ = quad(lambda s: abs(math.exp(l * s) * u(s)), 0.0, T, limit=200)
        assert abs(val - targets[k]) <= 1e-7 * scale + 1e-12 * mag


def test_minimum_norm_property():
    lam = np.array([0.0, 1.0, 3.0])
    T = 1.0
    u = solve_moment(MomentProblem(lam, T, (1.0, -0.5, 0.25)))
    assert u.quadrature_norm() == pytest.approx(u.norm, rel=1e-10)
    # adding any function orthogonal to the exponentials only increases the norm
    t, vals = u.samples(4000)
    from graphheat.metric_graph import simpson_weights

    w = simpson_weights(4000, T)
    v = np.sin(9 * math.pi * t)
    E = np.exp(np.outer(lam, t))
    coef = np.linalg.lstsq((E * w) @ E.T, (E * w) @ v, rcond=None)[0]
    v = v - coef @ E
    assert np.sqrt(w @ (vals + v) ** 2) > u.norm


def test_biorthogonality_standard():
    lam = np.array([0.0, 1.0, 2.5, 4.0])
    fam = moment.finite_biorthogonal(lam, 1.0, "standard")
    assert fam.precision == "standard" and fam.residual < 1e-8
    for k in range(1, 5):
        for j, l in enumerate(lam):
            val, _ = quad(lambda s: fam.evaluate(k, s) * math.exp(l * s), 0.0, 1.0, epsabs=1e-10, limit=200)
            assert val == pytest.approx(float(k == j + 1), abs=1e-7)


def test_extended_precision_for_interval_spectrum():
    lam = (np.arange(1, 11) * math.pi) ** 2
    fam = moment.finite_biorthogonal(lam, 1.0)
    assert fam.precision == "extended" and fam.residual < 1e-12
    with pytest.raises(IllConditioned):
        moment.finite_biorthogonal(lam, 1.0, "standard")


def test_extended_null_control_verified_by_mp_quadrature(uneven, cos_op):
    from graphheat import control_op, spectral

    spec = spectral.compute_spectrum(uneven, 6)
    b = control_op.couplings(cos_op, spec, 1, 6)
    z0 = np.ones(6) / math.sqrt(6)
    prob = moment.null_control_problem(z0, b, spec.lambdas, 0.5)
    u = solve_moment(prob, "extended")
    res = moment.moment_residuals_by_quadrature(u, prob.targets)
    assert res.max() / np.abs(prob.targets).max() < 1e-8


def test_zero_coupling_raises():
    with pytest.raises(ZeroCoupling):
        moment.null_control_targets(np.ones(3), np.array([1.0, 0.0, 1.0]))


def test_samples_match_evaluation():
    lam = (np.arange(1, 6) * math.pi) ** 2
    u = solve_moment(MomentProblem(lam - lam[0], 0.3, (1.0, 0.5, -0.2, 0.1, 0.05)), "extended")
    t, vals = u.samples(200)
    np.testing.assert_allclose(vals, u(t), rtol=1e-9, atol=1e-9 * np.abs(vals).max())


def test_cost_fit_recovers_rate():
    T = np.array([0.1, 0.2, 0.4, 0.8])
    nu, c, r2 = moment.fit_cost_blowup(T, np.exp(1.7 / T + 0.3))
    assert nu == pytest.approx(1.7) and c == pytest.approx(0.3) and r2 == pytest.approx(1.0)


def test_cost_grows_as_horizon_shrinks(uneven, cos_op):
    from graphheat import control_op, spectral

    spec = spectral.compute_spectrum(uneven, 6)
    b = control_op.couplings(cos_op, spec, 1, 6)
    costs = [moment.control_cost(spec.lambdas, b, 1, T, 6) for T in (1.0, 0.5, 0.25)]
    assert costs[0] < costs[1] < costs[2]
    K, mc = moment.control_cost(spec.lambdas, b, 1, 0.5, 6, samples=200)
    assert mc <= K * (1 + 1e-12)


def test_norm_shape_envelope():
    from graphheat import spectral

    lam = (np.arange(1, 11) * math.pi) ** 2
    fam = moment.finite_biorthogonal(lam, 1.0)
    gaps = spectral.running_gap(np.append(lam, (11 * math.pi) ** 2))
    shape = moment.norm_shape(fam, 1, spectral.block_gap(lam, 1), gaps)
    assert shape.bounded
    assert np.all(shape.excess <= shape.offset + shape.slope * np.sqrt(lam) + 1e-9)
