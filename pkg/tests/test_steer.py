import math

import numpy as np
import pytest

from graphheat import steer
from graphheat.control_op import ControlOperator, Profile
from graphheat.errors import OutsideBasin, ValidationError, WaitTimeExceeded
from graphheat.metric_graph import interval_graph


@pytest.fixture(scope="module")
def interval_setup():
    B = ControlOperator({"e1": Profile("monomial", power=2)})
    return steer.SteeringSetup.from_graph(interval_graph(1.0, "D", "D"), B, n_design=8, n_sim=16)


def test_already_on_target(interval_setup):
    run = steer.steer_to_eigensolution(interval_setup.basis(1), 1, 0.05, interval_setup)
    assert run.converged and run.iterations == 0 and run.control.is_zero


@pytest.mark.parametrize("eps", [0.01, 0.02, 0.05])
def test_local_steering_converges(interval_setup, eps):
    psi0 = interval_setup.basis(1) + eps * interval_setup.basis(2)
    run = steer.steer_to_eigensolution(psi0, 1, 0.05, interval_setup)
    assert run.converged and run.iterations <= 8
    assert run.residual < 1e-4
    target = math.exp(-interval_setup.lambdas[0] * 0.05) * interval_setup.basis(1)
    assert np.linalg.norm(run.final_state - target) == pytest.approx(run.residual)


def test_exact_chord_method_one_step(interval_setup):
    psi0 = interval_setup.basis(1) + 0.01 * interval_setup.basis(2)
    run = steer.steer_to_eigensolution(psi0, 1, 0.1, interval_setup, method="exact", max_iter=3)
    assert run.residuals[1] < run.residuals[0]


def test_basin_gate(interval_setup):
    with pytest.raises(OutsideBasin):
        steer.steer_to_eigensolution(interval_setup.basis(1) + 0.2 * interval_setup.basis(2), 1, 0.1,
                                     interval_setup)
    with pytest.raises(ValidationError):
        steer.steer_to_eigensolution(interval_setup.basis(1), 1, 0.1, interval_setup, method="bogus")
    with pytest.raises(ValidationError):
        steer.steer_to_eigensolution(interval_setup.basis(1), 1, -1.0, interval_setup)


def test_wait_time_single_mode():
    lam = np.array([1.0, 4.0, 9.0])
    y0 = np.array([1.0, 1.0, 0.0])
    # relative deviation decays like exp(-(lambda_2 - lambda_1) t)
    assert steer.wait_time(y0, lam) == pytest.approx(math.log(20) / 3.0, rel=1e-8)
    assert steer.wait_time(np.array([1.0, 0.0, 0.0]), lam) == 0.0
    with pytest.raises(WaitTimeExceeded):
        steer.wait_time(y0, lam, cap=0.1)


def test_semiglobal_interval(interval_setup):
    y0 = interval_setup.basis(1) + 0.8 * interval_setup.basis(2)
    run = steer.semiglobal_steer(y0, 0.05, interval_setup)
    gap = interval_setup.lambdas[1] - interval_setup.lambdas[0]
    assert run.wait_time == pytest.approx(math.log(0.8 / 0.05) / gap, rel=1e-4)
    assert run.converged


def test_semiglobal_cone(interval_setup):
    y0 = 2.0 * interval_setup.basis(1) + 0.5 * interval_setup.basis(2)
    run = steer.semiglobal_steer(y0, 0.05, interval_setup, mode="cone")
    assert run.mode == "cone" and run.converged and run.target_scale < 2.0
    with pytest.raises(ValidationError):
        steer.semiglobal_steer(interval_setup.basis(2), 0.05, interval_setup, mode="cone")
    with pytest.raises(ValidationError):
        steer.semiglobal_steer(3 * interval_setup.basis(1), 0.05, interval_setup, mode="strip")


def test_log_rows(interval_setup):
    psi0 = interval_setup.basis(1) + 0.02 * interval_setup.basis(2)
    run = steer.steer_to_eigensolution(psi0, 1, 0.05, interval_setup)
    rows = run.log_rows()
    assert rows[0][0] == 0 and rows[0][2] == 0.0 and len(rows) == run.iterations + 1
