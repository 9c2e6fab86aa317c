"""Galerkin time integration of the bilinear heat equation and its linearization.

State vectors are coefficients in the eigenbasis: ``c' = -Lambda c - u(t) M c``
with ``M[k, m] = <B phi_m, phi_k>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState, StepTooLarge
from .metric_graph import simpson_weights
from .moment import ControlSignal

MAX_STEP_FACTOR = 0.5


def free_evolution(c0, lambdas, t):
    """``c_k(t) = exp(-lambda_k t) c_k(0)``."""
    if t < 0:
        raise ValueError("free evolution runs forward in time only")
    c0 = np.asarray(c0, dtype=float)
    lam = np.asarray(lambdas, dtype=float)[: c0.size]
    return np.exp(-lam * t) * c0


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    coeffs: np.ndarray  # shape (len(times), N)
    dt: float
    scheme: str
    design_modes: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.coeffs[-1]

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def norms(self):
        return np.linalg.norm(self.coeffs, axis=1)

    def spillover(self):
        """Energy (squared norm) carried by modes above the design truncation."""
        n = self.design_modes
        if n is None or n >= self.coeffs.shape[1]:
            return np.zeros(self.times.size)
        return np.sum(self.coeffs[:, n:] ** 2, axis=1)


def _midpoint_values(u, T, n_steps):
    if u is None:
        return np.zeros(n_steps)
    if isinstance(u, ControlSignal):
        if u.is_zero:
            return np.zeros(n_steps)
        if abs(u.horizon - T) > 1e-12 * max(1.0, T):
            raise ValueError("control horizon differs from the integration horizon")
        _, vals = u.samples(2 * n_steps)
        return vals[1::2]
    if callable(u):
        t = (np.arange(n_steps) + 0.5) * (T / n_steps)
        return np.asarray(u(t), dtype=float) * np.ones(n_steps)
    vals = np.asarray(u, dtype=float)
    if vals.ndim == 0:
        return np.full(n_steps, float(vals))
    # samples on a uniform grid with 2 * n_steps intervals
    if vals.size != 2 * n_steps + 1:
        raise ValueError(f"sampled control needs {2 * n_steps + 1} values, got {vals.size}")
    return vals[1::2]


def default_step(lambdas):
    lam_max = float(np.max(np.abs(lambdas)))
    return min(1e-4, 0.1 / lam_max) if lam_max > 0 else 1e-4


def evolve_bilinear(c0, u, lambdas, coupling_matrix, T=None, dt=None, store_every=1, design_modes=None):
    """Strang splitting: exact diagonal half steps around an exact ``exp(-u_mid dt M)``.

    ``M`` is symmetric, so its exponential comes from one eigendecomposition.
    ``u`` may be a ``ControlSignal``, a callable of time, a constant, or
    samples on a uniform grid with ``2 * n_steps`` intervals.
    """
    c = np.array(c0, dtype=float)
    n = c.size
    lam = np.asarray(lambdas, dtype=float)[:n]
    M = np.asarray(coupling_matrix, dtype=float)[:n, :n]
    if T is None:
        if not isinstance(u, ControlSignal):
            raise ValueError("horizon T is required unless u is a ControlSignal")
        T = u.horizon
    if T <= 0:
        raise ValueError("horizon must be positive")
    dt = default_step(lam) if dt is None else float(dt)
    lam_max = float(np.max(np.abs(lam)))
    if lam_max > 0 and dt > MAX_STEP_FACTOR / lam_max:
        raise StepTooLarge(f"dt = {dt:g} exceeds {MAX_STEP_FACTOR}/lambda_N = {MAX_STEP_FACTOR / lam_max:g}")
    n_steps = max(1, int(math.ceil(T / dt - 1e-9)))
    h = T / n_steps
    umid = _midpoint_values(u, T, n_steps)
    half = np.exp(-0.5 * h * lam)
    w, Q = np.linalg.eigh(0.5 * (M + M.T))

    stored_t = [0.0]
    stored_c = [c.copy()]
    for i in range(n_steps):
        c *= half
        if umid[i] != 0.0:
            c = Q @ (np.exp(-umid[i] * h * w) * (Q.T @ c))
        c *= half
        if (i + 1) % store_every == 0 or i + 1 == n_steps:
            if not np.all(np.isfinite(c)):
                raise NonFiniteState(f"non-finite state at t = {(i + 1) * h:g}")
            stored_t.append((i + 1) * h)
            stored_c.append(c.copy())
    return Trajectory(
        np.array(stored_t),
        np.array(stored_c),
        h,
        "strang-exponential",
        design_modes,
        {"steps": n_steps, "modes": n},
    )


def evolve_linearized(z0, u, lambdas, bj, T, n_intervals=None):
    """``z_k(T) = exp(-lambda_k T) z_k(0) - b_k int_0^T exp(-lambda_k (T - s)) u(s) ds``.

    The convolution is exact for a ``ControlSignal``; sampled controls use
    composite Simpson on their uniform grid.
    """
    z0 = np.asarray(z0, dtype=float)
    lam = np.asarray(lambdas, dtype=float)[: z0.size]
    b = np.asarray(bj, dtype=float)[: z0.size]
    free = np.exp(-lam * T) * z0
    if u is None:
        conv = np.zeros_like(lam)
    elif isinstance(u, ControlSignal):
        conv = u.exponential_moments(lam)
    else:
        vals = np.asarray(u, dtype=float)
        m = vals.size - 1
        if m < 2 or m % 2:
            raise ValueError("sampled control needs an even number of intervals")
        s = np.linspace(0.0, T, m + 1)
        w = simpson_weights(m, T)
        conv = np.exp(-np.outer(lam, T - s)) @ (w * vals)
    out = free - b * conv
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("non-finite linearized state")
    return out


def midpoint_grid(T, lambdas, dt=None):
    """Step count and step size used by ``evolve_bilinear`` for a given horizon."""
    lam = np.asarray(lambdas, dtype=float)
    dt = default_step(lam) if dt is None else float(dt)
    lam_max = float(np.max(np.abs(lam)))
    if lam_max > 0 and dt > MAX_STEP_FACTOR / lam_max:
        raise StepTooLarge(f"dt = {dt:g} exceeds {MAX_STEP_FACTOR}/lambda_N = {MAX_STEP_FACTOR / lam_max:g}")
    n_steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return n_steps, T / n_steps


def bilinear_tangent(c0, u_mid, basis_mid, lambdas, coupling_matrix, h):
    """Final state of the Strang scheme and its exact derivative with respect to control coordinates.

    The control at the step midpoints is ``u_mid = basis_mid @ alpha``; the
    returned Jacobian is ``d c(T) / d alpha`` of the discrete map, using
    ``d/du exp(-u h M) = -h M exp(-u h M)``.
    """
    c = np.array(c0, dtype=float)
    lam = np.asarray(lambdas, dtype=float)[: c.size]
    M = np.asarray(coupling_matrix, dtype=float)
    basis_mid = np.asarray(basis_mid, dtype=float)
    half = np.exp(-0.5 * h * lam)
    w, Q = np.linalg.eigh(0.5 * (M + M.T))
    J = np.zeros((c.size, basis_mid.shape[1]))
    for i in range(u_mid.size):
        c *= half
        J *= half[:, None]
        # work in the eigenframe of M for the bilinear substep
        ce = Q.T @ c
        Je = Q.T @ J
        ex = np.exp(-u_mid[i] * h * w)
        Je = ex[:, None] * Je - h * np.outer(w * ex * ce, basis_mid[i])
        ce = ex * ce
        c = Q @ ce
        J = Q @ Je
        c *= half
        J *= half[:, None]
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(J))):
        raise NonFiniteState("non-finite state in the tangent integration")
    return c, J
