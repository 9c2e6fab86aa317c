import math

import numpy as np
import pytest

from graphheat import control_op, filtering, simulate, spectral
from graphheat.control_op import ControlOperator, Profile
from graphheat.errors import NotInvariant, UnequalLengths, ValidationError
from graphheat.metric_graph import star_graph


@pytest.fixture(scope="module")
def H():
    return filtering.build_invariant_subspace(math.sqrt(2), 6)


def test_generators_orthonormal(H):
    np.testing.assert_allclose(H.gram(exact=True), np.eye(6), atol=1e-14)
    np.testing.assert_allclose(H.gram(), np.eye(6), atol=1e-10)


def test_generators_are_eigenfunctions(H):
    for k in range(1, 7):
        tips, cont, flux = H.vertex_residuals(k)
        assert tips == 0 and cont < 1e-14 and flux < 1e-12


def test_complement_satisfies_vertex_conditions(H):
    # zero flux sum, orthogonal to the generator, unit norm
    g = np.array(filtering.G_TEMPLATE)
    f = np.array(filtering.F_TEMPLATE)
    assert abs(g.sum()) < 1e-15 and abs(g @ f) < 1e-15
    assert np.linalg.norm(g) == pytest.approx(math.sqrt(2))  # sin^2 integrates to 1/2
    assert abs(np.sum(filtering.G_TEMPLATE_ALT)) > 0.1


def test_generators_in_full_spectrum(H):
    lam = spectral.compute_spectrum(H.graph, 20).lambdas
    for k in range(1, 4):
        assert np.min(np.abs(lam - (k * math.pi) ** 2)) < 1e-9


def test_invariance_verdicts(H):
    assert filtering.check_B_invariance(filtering.arm_square_operator(), H).passed
    assert filtering.check_B_invariance(ControlOperator({"e1": Profile("constant", 0.0)}), H).passed
    tail = filtering.arm_square_operator(Profile("cosine"))
    assert filtering.check_B_invariance(tail, H).passed
    bad = filtering.check_B_invariance(ControlOperator({"e1": Profile("monomial", power=2)}), H)
    assert not bad.passed and bad.verdict == "FAIL"


def test_single_arm_leak_matches_oracle():
    H1 = filtering.build_invariant_subspace(math.sqrt(2), 1)
    rep = filtering.check_B_invariance(ControlOperator({"e1": Profile("monomial", power=2)}), H1, samples=1)
    # B f_1 has half its x^2 sin(pi x) mass outside H
    x = np.linspace(0, 1, 200001)
    oracle = math.sqrt(np.trapezoid((x**2 * np.sin(np.pi * x)) ** 2, x) / 2)
    assert rep.worst_residual == pytest.approx(oracle, rel=1e-6)


def test_reduction(H):
    red = filtering.reduce_to_interval(H, filtering.arm_square_operator())
    np.testing.assert_allclose(red.lambdas, (np.arange(1, 7) * math.pi) ** 2)
    spec = spectral.compute_spectrum(red.graph, 6)
    b = control_op.couplings(red.operator, spec, 1, 6)
    oracle = [filtering.reduced_coupling_oracle(k) for k in range(1, 7)]
    np.testing.assert_allclose(b, oracle, atol=1e-12)
    with pytest.raises(NotInvariant):
        filtering.reduce_to_interval(H, ControlOperator({"e2": Profile("monomial", power=2)}))


def test_lift_matches_coordinates(H):
    red = filtering.reduce_to_interval(H, filtering.arm_square_operator())
    c = np.array([0.5, -0.25, 0.1, 0.0, 0.0, 0.05])
    np.testing.assert_allclose(H.coordinates(red.lift(c)), c, atol=1e-10)


def test_rejects_wrong_graphs():
    with pytest.raises(UnequalLengths):
        filtering.build_invariant_subspace(star_graph([1.0, 1.2, 1.0, 2.0], tip_condition="D"), 3)
    with pytest.raises(ValidationError):
        filtering.build_invariant_subspace(star_graph([1.0, 1.0, 1.0, 2.0]), 3)


def test_full_model_keeps_state_in_H(H):
    model = filtering.full_star_model(H, filtering.arm_square_operator(), 20)
    c0 = model.embed([1.0, 0.2, -0.1])
    tr = simulate.evolve_bilinear(c0, lambda t: 10 * np.sin(5 * t), model.lambdas, model.coupling_matrix,
                                  T=0.3, store_every=50)
    assert model.outside_energy(tr.coeffs).max() < 1e-20
    # a non-invariant operator leaks
    leak = filtering.full_star_model(H, ControlOperator({"e1": Profile("monomial", power=2)}), 20)
    tr = simulate.evolve_bilinear(c0, 10.0, leak.lambdas, leak.coupling_matrix, T=0.3, store_every=50)
    assert leak.outside_energy(tr.coeffs).max() > 1e-6
