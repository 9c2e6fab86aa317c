"""Steering the bilinear heat equation to eigensolutions.

Local steering corrects the final-time miss by successive linearization: each
pass solves a linear problem for a control correction, adds it to the running
control and re-simulates the full bilinear dynamics.  Semi-global steering
first waits, letting the free dynamics pull the state into the local basin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control_op import COUPLING_FLOOR, ControlOperator, coupling_matrix
from .errors import (
    Diverged,
    NonFiniteState,
    OutsideBasin,
    ValidationError,
    WaitTimeExceeded,
    ZeroCoupling,
)
from .moment import ControlSignal, ExponentialResponse, MomentProblem, solve_moment, tikhonov_solve
from .simulate import bilinear_tangent, evolve_bilinear, free_evolution, midpoint_grid
from .spectral import compute_spectrum

DEFAULT_BASIN = 0.05
DEFAULT_TOL = 1e-4
INITIAL_DAMPING = 1e-6
MAX_DAMPING_RETRIES = 30


@dataclass(frozen=True, eq=False)
class SteeringSetup:
    """Truncated model: ``n_sim`` simulated modes, the first ``n_design`` of them controlled."""

    lambdas: np.ndarray
    coupling_matrix: np.ndarray
    n_design: int
    dt: float | None = None
    precision: str = "auto"

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        M = np.asarray(self.coupling_matrix, dtype=float)
        if M.shape != (lam.size, lam.size):
            raise ValidationError("coupling matrix must be square with one row per mode")
        if not 1 <= self.n_design <= lam.size:
            raise ValidationError("design truncation must lie between 1 and the simulated modes")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "coupling_matrix", M)

    @classmethod
    def from_graph(cls, graph, B: ControlOperator, n_design=10, n_sim=None, **kw):
        n_sim = 2 * n_design if n_sim is None else n_sim
        spec = compute_spectrum(graph, n_sim)
        spec.require_simple(n_sim)
        return cls(spec.lambdas[:n_sim], coupling_matrix(B, spec, n_sim), n_design, **kw)

    @property
    def n_sim(self):
        return self.lambdas.size

    def basis(self, j):
        e = np.zeros(self.n_sim)
        e[j - 1] = 1.0
        return e


@dataclass(eq=False)
class SteeringRun:
    j: int
    horizon: float
    residuals: list = field(default_factory=list)
    correction_norms: list = field(default_factory=list)
    control: ControlSignal | None = None
    converged: bool = False
    basin_radius: float = DEFAULT_BASIN
    initial_deviation: float = 0.0
    final_state: np.ndarray | None = None
    target_scale: float = 1.0
    mode: str = "local"
    wait_time: float = 0.0
    spillover: float = 0.0

    @property
    def iterations(self):
        return len(self.correction_norms)

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else math.nan

    def log_rows(self):
        rows = []
        for i, r in enumerate(self.residuals):
            du = self.correction_norms[i - 1] if i else 0.0
            rows.append((i, r, du))
        return rows


def _final_state(setup, psi0, u, T):
    if u.is_zero:
        return free_evolution(psi0, setup.lambdas, T), 0.0
    tr = evolve_bilinear(psi0, u, setup.lambdas, setup.coupling_matrix, T=T, dt=setup.dt, design_modes=setup.n_design)
    return tr.final, float(tr.spillover()[-1])


def steer_to_eigensolution(
    psi0,
    j,
    T,
    setup: SteeringSetup,
    max_iter=8,
    tol=DEFAULT_TOL,
    basin=DEFAULT_BASIN,
    target_scale=1.0,
    method="newton",
) -> SteeringRun:
    """Drive ``psi(T)`` to ``target_scale * exp(-lambda_j T) phi_j``.

    Each pass linearizes about the target eigensolution and corrects the
    current final-time miss ``r``.  ``method="exact"`` solves the N-mode
    moment problem for ``r`` exactly.  ``method="newton"`` fits all
    simulated modes by damped least squares over the same control space; a
    step is kept only if it lowers the true residual, otherwise the damping
    grows (Levenberg-Marquardt).  The deviation gate is relative to
    ``target_scale``; the logged residual is the absolute coefficient-norm miss.
    """
    if method not in ("newton", "exact"):
        raise ValidationError(f"unknown steering method {method!r}")
    n = setup.n_design
    if not 1 <= j <= n:
        raise ValidationError(f"target index {j} outside 1..{n}")
    if T <= 0:
        raise ValidationError("horizon must be positive")
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.size > setup.n_sim:
        raise ValidationError("initial state has more coefficients than simulated modes")
    psi0 = np.pad(psi0, (0, setup.n_sim - psi0.size))
    s = float(target_scale)
    e_j = setup.basis(j)
    deviation = float(np.linalg.norm(psi0 - s * e_j)) / abs(s)
    if deviation > basin:
        raise OutsideBasin(
            f"initial deviation {deviation:.3g} exceeds basin radius {basin:g}; try semiglobal_steer"
        )
    lam = setup.lambdas
    lam_j = float(lam[j - 1])
    shifted = lam[:n] - lam_j
    b = setup.coupling_matrix[:, j - 1]
    bad = np.flatnonzero(np.abs(b[:n]) < COUPLING_FLOOR)
    if bad.size:
        raise ZeroCoupling(f"<B phi_{j}, phi_{bad[0] + 1}> is numerically zero")
    target = s * math.exp(-lam_j * T) * e_j

    run = SteeringRun(j, float(T), basin_radius=basin, initial_deviation=deviation, target_scale=s)
    u = ControlSignal.zero(shifted, T)
    state, spill = _final_state(setup, psi0, u, T)
    run.residuals.append(float(np.linalg.norm(state - target)))
    if run.residuals[-1] >= tol:
        if method == "exact":
            u, state, spill = _exact_loop(run, setup, psi0, j, T, shifted, b[:n], s, target, state, max_iter, tol)
        else:
            u, state, spill = _newton_loop(run, setup, psi0, j, T, shifted, s, target, max_iter, tol)
    run.control = u
    run.final_state = state
    run.converged = run.residuals[-1] < tol
    run.spillover = spill
    return run


def _exact_loop(run, setup, psi0, j, T, shifted, b, s, target, state, max_iter, tol):
    n = shifted.size
    gain = math.exp(float(setup.lambdas[j - 1]) * T) / s
    u = ControlSignal.zero(shifted, T)
    spill = 0.0
    rises = 0
    while run.residuals[-1] >= tol and run.iterations < max_iter:
        r = (state - target)[:n]
        problem = MomentProblem(shifted, float(T), tuple(gain * r / b), form="final", provenance="steering")
        du = solve_moment(problem, setup.precision)
        u = u + du
        run.correction_norms.append(du.norm)
        try:
            state, spill = _final_state(setup, psi0, u, T)
        except NonFiniteState as exc:
            raise Diverged(f"state blew up after {run.iterations} corrections") from exc
        run.residuals.append(float(np.linalg.norm(state - target)))
        rises = rises + 1 if run.residuals[-1] > run.residuals[-2] else 0
        if rises >= 2:
            raise Diverged(f"residual rose twice in a row: {run.residuals[-3:]}")
    return u, state, spill


def _newton_loop(run, setup, psi0, j, T, shifted, s, target, max_iter, tol):
    resp = ExponentialResponse.build(shifted, T)
    n_steps, h = midpoint_grid(T, setup.lambdas, setup.dt)
    basis = resp.midpoint_values(n_steps)
    M = setup.coupling_matrix

    def run_at(alpha):
        state, J = bilinear_tangent(psi0, basis @ alpha, basis, setup.lambdas, M, h)
        return state, J, float(np.linalg.norm(state - target))

    alpha = np.zeros(shifted.size)
    state, J, res = run_at(alpha)
    run.residuals[-1] = res
    damping = None
    growth = 2.0
    while res >= tol and run.iterations < max_iter:
        r = target - state
        if damping is None:
            damping = INITIAL_DAMPING * float(np.max(np.sum(J * J, axis=0)))
        for _ in range(MAX_DAMPING_RETRIES):
            step = tikhonov_solve(J, r, damping)
            try:
                t_state, t_J, t_res = run_at(alpha + step)
            except NonFiniteState:
                t_res = math.inf
            predicted = res**2 - float(np.linalg.norm(r - J @ step)) ** 2
            gain = (res**2 - t_res**2) / predicted if predicted > 0 else -1.0
            if t_res < res:
                # Nielsen's update: relax the damping after good agreement
                damping *= max(1.0 / 3.0, 1.0 - (2.0 * gain - 1.0) ** 3) if gain > 0 else growth
                growth = 2.0
                break
            damping *= growth
            growth *= 2.0
        else:
            raise Diverged(f"no damping level lowered the residual {res:.3e}")
        alpha = alpha + step
        state, J, res = t_state, t_J, t_res
        run.correction_norms.append(float(np.linalg.norm(step)))
        run.residuals.append(res)
    u = resp.control(alpha)
    spill = float(np.sum(state[setup.n_design :] ** 2))
    return u, state, spill


def _free_deviation(y0, lambdas, j, scale, t):
    y = free_evolution(y0, lambdas, t)
    y[j - 1] -= scale * math.exp(-lambdas[j - 1] * t)
    return float(np.linalg.norm(y)) * math.exp(lambdas[j - 1] * t) / abs(scale)


def wait_time(y0, lambdas, basin=DEFAULT_BASIN, scale=1.0, j=1, cap=None, rtol=1e-10):
    """First time at which the freely evolving deviation from the target falls to ``basin``."""
    lam = np.asarray(lambdas, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if _free_deviation(y0, lam, j, scale, 0.0) <= basin:
        return 0.0
    gap = float(lam[j] - lam[j - 1])
    cap = 50.0 / gap if cap is None else cap
    if _free_deviation(y0, lam, j, scale, cap) > basin:
        raise WaitTimeExceeded(f"deviation still above {basin:g} after waiting {cap:g}")
    lo, hi = 0.0, cap
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _free_deviation(y0, lam, j, scale, mid) <= basin:
            hi = mid
        else:
            lo = mid
    return hi


def semiglobal_steer(
    y0,
    T,
    setup: SteeringSetup,
    mode="strip",
    r1=0.5,
    R=None,
    tol=DEFAULT_TOL,
    basin=DEFAULT_BASIN,
    max_iter=8,
    cap=None,
    method="newton",
) -> SteeringRun:
    """Wait freely, then steer locally towards the first eigensolution.

    ``strip``: target ``phi_1`` with ``|<y0, phi_1> - 1| < r1`` and ``||y0 - <y0, phi_1> phi_1|| <= R``.
    ``cone``: target ``<y0, phi_1> phi_1``; requires ``<y0, phi_1> != 0`` and
    ``||y0 - <y0, phi_1> phi_1|| <= R |<y0, phi_1>|``.
    """
    y0 = np.asarray(y0, dtype=float)
    c1 = float(y0[0])
    rest = float(np.linalg.norm(y0[1:]))
    if mode == "strip":
        if not abs(c1 - 1.0) < r1:
            raise ValidationError(f"|<y0, phi_1> - 1| = {abs(c1 - 1):.3g} is not below r1 = {r1:g}")
        if R is not None and rest > R:
            raise ValidationError(f"deviation {rest:.3g} exceeds R = {R:g}")
        scale = 1.0
    elif mode == "cone":
        if c1 == 0.0:
            raise ValidationError("cone mode needs <y0, phi_1> != 0")
        if R is not None and rest > R * abs(c1):
            raise ValidationError(f"deviation {rest:.3g} exceeds R |<y0, phi_1>| = {R * abs(c1):.3g}")
        scale = c1
    else:
        raise ValidationError(f"unknown semi-global mode {mode!r}")
    # stop slightly inside the basin so the local gate passes despite rounding
    t_wait = wait_time(y0, setup.lambdas, basin * (1 - 1e-6), scale, 1, cap)
    y_wait = free_evolution(y0, setup.lambdas, t_wait)
    # restart the clock: the target eigensolution at the end of the wait
    lam1 = float(setup.lambdas[0])
    run = steer_to_eigensolution(
        y_wait, 1, T, setup, max_iter, tol, basin, scale * math.exp(-lam1 * t_wait), method
    )
    run.mode = mode
    run.wait_time = t_wait
    return run
