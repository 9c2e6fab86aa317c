import math

import numpy as np
import pytest

from graphheat import control_op, spectral
from graphheat.control_op import ControlOperator, Profile
from graphheat.errors import FirstCouplingZero, GraphSpecError, IndexOutOfRange


def test_star_first_coupling_closed_form(uneven, cos_op):
    spec = spectral.compute_spectrum(uneven, 5)
    expected = 2 * 1.0 / (math.pi * uneven.total_length)
    assert control_op.coupling(cos_op, spec, 1, 1) == pytest.approx(expected, rel=1e-13)
    assert control_op.coupling_by_quadrature(cos_op, spec, 1, 1) == pytest.approx(expected, rel=1e-10)


def test_tadpole_first_coupling_closed_form(tadpole, lin_op):
    spec = spectral.compute_spectrum(tadpole, 5)
    L1, L2 = 2.0, math.sqrt(3)
    assert control_op.coupling(lin_op, spec, 1, 1) == pytest.approx(L1**2 / (2 * (L1 + L2)), rel=1e-13)


@pytest.mark.parametrize("graph,op", [("uneven", "cos_op"), ("tadpole", "lin_op")])
def test_closed_forms_agree_with_quadrature(graph, op, request):
    g, B = request.getfixturevalue(graph), request.getfixturevalue(op)
    spec = spectral.compute_spectrum(g, 15)
    for k in range(1, 16):
        assert control_op.coupling(B, spec, 1, k) == pytest.approx(
            control_op.coupling_by_quadrature(B, spec, 1, k), abs=1e-10)


def test_coupling_matrix_symmetric(uneven, cos_op):
    spec = spectral.compute_spectrum(uneven, 8)
    M = control_op.coupling_matrix(cos_op, spec, 8)
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    np.testing.assert_allclose(M[:, 0], control_op.couplings(cos_op, spec, 1, 8), atol=1e-10)


def test_constant_multiplier_gives_identity(uneven):
    spec = spectral.compute_spectrum(uneven, 6)
    B = ControlOperator({e.id: Profile("constant", 2.0) for e in uneven.edges})
    np.testing.assert_allclose(control_op.coupling_matrix(B, spec, 6), 2 * np.eye(6), atol=1e-10)


def test_spreading_pass(uneven, cos_op, tadpole, lin_op):
    rep = control_op.verify_spreading(cos_op, spectral.compute_spectrum(uneven, 30), 1, 30)
    assert rep.passed and rep.q <= 2.5
    rep = control_op.verify_spreading(lin_op, spectral.compute_spectrum(tadpole, 30), 1, 30)
    assert rep.passed and rep.q <= 2.0


def test_spreading_zero_operator_fails(uneven):
    spec = spectral.compute_spectrum(uneven, 12)
    with pytest.raises(FirstCouplingZero):
        control_op.verify_spreading(ControlOperator({"e1": Profile("constant", 0.0)}), spec, 1, 12)


def test_index_checks(uneven, cos_op):
    spec = spectral.compute_spectrum(uneven, 4)
    with pytest.raises(IndexOutOfRange):
        control_op.coupling(cos_op, spec, 1, 5)


def test_operator_spec():
    B = ControlOperator.from_spec({"profiles": [{"edge": "e1", "kind": "monomial", "power": 2}]})
    assert B.target_edges == ("e1",)
    with pytest.raises(GraphSpecError):
        ControlOperator.from_spec({"profiles": [{"edge": "e1", "kind": "bogus"}]})
    with pytest.raises(GraphSpecError):
        ControlOperator.from_spec({})
