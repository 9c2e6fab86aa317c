import math

import numpy as np
import pytest

from graphheat import spectral
from graphheat.acceptance import merged_family
from graphheat.errors import InsufficientSpectrum, MultiplicityDetected, TruncationInsufficient
from graphheat.metric_graph import inner_product, interval_graph, star_graph


def test_equal_star_merged_family(equal_star):
    spec = spectral.compute_spectrum(equal_star, 20)
    expected, flags = merged_family(20)
    np.testing.assert_allclose(spec.lambdas, expected, rtol=1e-12, atol=1e-13)
    assert tuple(spec.multiplicity) == flags


@pytest.mark.parametrize("left,right,shift", [("D", "D", 1), ("N", "N", 0), ("D", "N", 0.5)])
def test_interval_closed_forms(left, right, shift):
    L = 1.3
    spec = spectral.compute_spectrum(interval_graph(L, left, right), 12)
    k = np.arange(12) + shift
    if left != right:
        k = np.arange(12) + 0.5
    np.testing.assert_allclose(spec.lambdas, (k * math.pi / L) ** 2, rtol=1e-12, atol=1e-14)


def test_tadpole_contains_loop_antisymmetric_family(tadpole):
    # odd modes vanishing at the junction: (2 pi k / L1)^2 with L1 = 2
    lam = spectral.compute_spectrum(tadpole, 30).lambdas
    for k in range(1, 5):
        assert np.min(np.abs(lam - (k * math.pi) ** 2)) < 1e-9


@pytest.mark.parametrize("graph", ["uneven", "tadpole"])
def test_eigenfunctions_orthonormal(graph, request):
    g = request.getfixturevalue(graph)
    spec = spectral.compute_spectrum(g, 8)
    G = np.array([[inner_product(spec.eigenfunction(i), spec.eigenfunction(j), g) for j in range(1, 9)]
                  for i in range(1, 9)])
    np.testing.assert_allclose(G, np.eye(8), atol=1e-10)


def test_vertex_conditions_hold(uneven):
    spec = spectral.compute_spectrum(uneven, 15)
    for k in range(1, 16):
        cont, flux = spec.vertex_residuals(k)
        assert cont < 1e-10 and flux < 1e-8 * max(1.0, spec.omegas[k - 1])


def test_oracle_second_order(uneven):
    lam = spectral.compute_spectrum(uneven, 6).lambdas
    e1 = np.abs(spectral.discretize_oracle(uneven, 4e-3, 6).lambdas - lam).max()
    e2 = np.abs(spectral.discretize_oracle(uneven, 2e-3, 6).lambdas - lam).max()
    assert 3.0 < e1 / e2 < 5.0


def test_dirichlet_star_oracle():
    g = star_graph([1.0, 1.3, 0.7], tip_condition="D")
    lam = spectral.compute_spectrum(g, 6).lambdas
    orc = spectral.discretize_oracle(g, 1e-3, 6).lambdas
    np.testing.assert_allclose(orc, lam, rtol=1e-4)


def test_require_simple(equal_star, uneven):
    with pytest.raises(MultiplicityDetected):
        spectral.compute_spectrum(equal_star, 5).require_simple()
    spectral.compute_spectrum(uneven, 20).require_simple()


def test_gap_report_shapes(uneven):
    lam = spectral.compute_spectrum(uneven, 41).lambdas
    rep = spectral.gap_report(lam, 1)
    assert rep.block_gap > 0 and not rep.weak_gap_failure
    assert 0 <= rep.weak_gap_p <= 1.5
    assert 0 < rep.weyl_C1 <= rep.weyl_C2
    assert all(c[2] == 0 for c in rep.counting)


def test_gap_report_flags_repeats(equal_star):
    rep = spectral.gap_report(spectral.compute_spectrum(equal_star, 20).lambdas, 2)
    assert rep.weak_gap_failure and rep.zero_gap_indices
    assert rep.block_gap > 0


def test_gap_report_needs_enough_values():
    with pytest.raises(InsufficientSpectrum):
        spectral.gap_report(np.arange(5.0), 1)


def test_counting_function():
    lam = np.array([0.0, 1.0, 1.5, 4.0, 9.0])
    assert spectral.counting_function(lam, 2, 0.6) == 1
    assert spectral.counting_function(lam, 2, 0.4) == 0
    with pytest.raises(TruncationInsufficient):
        spectral.counting_function(lam, 5, 1.0)


def test_running_gap_nonincreasing(tadpole):
    a = spectral.running_gap(spectral.compute_spectrum(tadpole, 30).lambdas)
    assert np.all(np.diff(a) <= 0)
