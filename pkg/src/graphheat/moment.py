"""Truncated exponential moment problems, biorthogonal families and control cost.

Controls live in the span of ``f_k(s) = exp(-lambda_k (T - s))``.  The moment
conditions ``int_0^T exp(lambda_k s) u(s) ds = d_k`` become
``G c = d'`` with ``d'_k = exp(-lambda_k T) d_k`` and the Gram matrix
``G_kl = (1 - exp(-(lambda_k + lambda_l) T)) / (lambda_k + lambda_l)``.
The minimum-L2-norm solution is ``u = sum_l c_l f_l``.

``G`` is a Cauchy-like matrix whose condition number grows quickly with N,
and checking residuals in the raw form multiplies errors by
``exp(lambda_k T)``.  In extended precision everything runs in mpmath with the
working precision raised until the raw residuals verify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .errors import DegenerateSpectrum, IllConditioned, ResidualTooLarge, ZeroCoupling

RESIDUAL_TOL = 1e-8
VERIFY_TOL = 1e-12
STANDARD_LOG10_BUDGET = 12.0
MAX_DPS = 4000

mp = mpmath.mp


# ---------------------------------------------------------------------------
# Gram matrices


def _check_lambdas(lambdas):
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DegenerateSpectrum("need a nonempty 1-d sequence of exponents")
    d = np.diff(lam)
    if np.any(d <= 1e-12 * np.maximum(1.0, np.abs(lam[1:]))):
        raise DegenerateSpectrum("exponents must be strictly increasing (simple spectrum)")
    return lam


def gram_matrix(lambdas, T):
    """``G_kl = int_0^T f_k f_l ds`` for the shifted basis (double precision)."""
    lam = _check_lambdas(lambdas)
    if T <= 0:
        raise ValueError("horizon must be positive")
    s = lam[:, None] + lam[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        G = -np.expm1(-s * T) / s
    G[s == 0] = T
    return G


def _gram_mp(lam, T, other=None):
    other = lam if other is None else other
    G = mpmath.matrix(len(lam), len(other))
    for i, a in enumerate(lam):
        for j, b in enumerate(other):
            s = a + b
            G[i, j] = T if s == 0 else -mpmath.expm1(-s * T) / s
    return G


def _log10_cond_estimate(lam, T):
    """log10 of the raw-form condition: cond(G) amplified by the exponential rescaling."""
    G = gram_matrix(lam, T)
    c = np.linalg.cond(G)
    lc = 17.0 if not np.isfinite(c) or c > 1e17 else math.log10(c)
    spread = (lam.max() - lam.min()) * T
    return lc + 2 * spread / math.log(10)


def _initial_dps(lam, T):
    return int(40 + 1.3 * _log10_cond_estimate(lam, T) + 2 * len(lam))


def _resolve_precision(precision, lam, T):
    if precision not in ("auto", "standard", "extended"):
        raise ValueError(f"unknown precision {precision!r}")
    if precision != "auto":
        return precision
    return "standard" if _log10_cond_estimate(lam, T) <= STANDARD_LOG10_BUDGET else "extended"


# ---------------------------------------------------------------------------
# biorthogonal family


@dataclass(frozen=True, eq=False)
class BiorthogonalFamily:
    """``sigma_k = sum_l C[k, l] f_l`` with ``int sigma_k exp(lambda_j s) ds = delta_kj``.

    Norms are stored as logarithms because ``||sigma_k||`` carries the factor
    ``exp(-lambda_k T)`` and underflows for large ``lambda_k T``.
    """

    lambdas: np.ndarray
    horizon: float
    coefficients: object  # mpmath.matrix (extended) or ndarray (standard)
    log_norms: np.ndarray
    log10_condition: float
    precision: str
    dps: int
    residual: float

    @property
    def norms(self):
        return np.exp(self.log_norms)

    def evaluate(self, k, t):
        """``sigma_k(t)`` (1-based k)."""
        row = [self.coefficients[k - 1, l] for l in range(len(self.lambdas))]
        return _evaluate_exponential_sum(row, self.lambdas, self.horizon, t)


def _biorth_residual_mp(lam, T, Ginv, G):
    P = Ginv * G
    n = len(lam)
    worst = mpmath.mpf(0)
    for k in range(n):
        for j in range(n):
            val = mpmath.exp((lam[j] - lam[k]) * T) * P[k, j] - (1 if k == j else 0)
            worst = max(worst, abs(val))
    return worst


def finite_biorthogonal(lambdas, T, precision="auto") -> BiorthogonalFamily:
    """Minimum-norm biorthogonal family to ``{exp(lambda_k s)}`` in the span of the ``f_l``."""
    lam = _check_lambdas(lambdas)
    if T <= 0:
        raise ValueError("horizon must be positive")
    mode = _resolve_precision(precision, lam, T)
    log10c = _log10_cond_estimate(lam, T)
    n = lam.size
    if mode == "standard":
        if log10c > 16 or np.any(lam * T > 700):
            raise IllConditioned(
                f"raw-form condition ~1e{log10c:.0f} exceeds double precision; "
                "use precision='extended' or fewer modes"
            )
        G = gram_matrix(lam, T)
        try:
            Ginv = sla.cho_solve(sla.cho_factor(G), np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise IllConditioned(str(exc)) from exc
        C = np.exp(-lam * T)[:, None] * Ginv
        R = np.exp((lam[None, :] - lam[:, None]) * T) * (Ginv @ G) - np.eye(n)
        diag = np.diag(Ginv)
        if np.any(diag <= 0):
            raise IllConditioned("Gram inverse lost positive definiteness")
        log_norms = -lam * T + 0.5 * np.log(diag)
        return BiorthogonalFamily(lam, T, C, log_norms, log10c, "standard", 16, float(np.abs(R).max()))
    dps = _initial_dps(lam, T)
    while True:
        with mpmath.workdps(dps):
            lm = [mpmath.mpf(float(x)) for x in lam]
            Tm = mpmath.mpf(float(T))
            G = _gram_mp(lm, Tm)
            try:
                Ginv = mpmath.inverse(G)
            except ZeroDivisionError:
                Ginv = None
            if Ginv is not None:
                res = _biorth_residual_mp(lm, Tm, Ginv, G)
                if res < VERIFY_TOL and all(Ginv[k, k] > 0 for k in range(n)):
                    C = mpmath.matrix(n, n)
                    for k in range(n):
                        ek = mpmath.exp(-lm[k] * Tm)
                        for l in range(n):
                            C[k, l] = ek * Ginv[k, l]
                    log_norms = np.array(
                        [float(-lm[k] * Tm + mpmath.log(Ginv[k, k]) / 2) for k in range(n)]
                    )
                    return BiorthogonalFamily(
                        lam, T, C, log_norms, log10c, "extended", dps, float(res)
                    )
        dps *= 2
        if dps > MAX_DPS:
            raise IllConditioned(f"biorthogonal family not verified below {MAX_DPS} digits")


# ---------------------------------------------------------------------------
# controls


def _evaluate_exponential_sum(coeffs, lam, T, t):
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if all(isinstance(c, (float, np.floating)) for c in coeffs):
        c = np.asarray(coeffs, dtype=float)
        out = np.exp(-np.outer(T - t_arr, lam)) @ c
    else:
        mags = [abs(c) for c in coeffs]
        big = max(mags) if mags else 0
        digits = 20 + (int(mpmath.log10(big)) + 1 if big > 1 else 0)
        with mpmath.workdps(max(digits, 20) + 10):
            cm = [mpmath.mpf(c) for c in coeffs]
            lm = [mpmath.mpf(float(x)) for x in lam]
            Tm = mpmath.mpf(float(T))
            out = np.empty(t_arr.size)
            for i, ti in enumerate(t_arr):
                tau = Tm - mpmath.mpf(float(ti))
                out[i] = float(mpmath.fsum(c * mpmath.exp(-l * tau) for c, l in zip(cm, lm)))
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """``u(s) = sum_l c_l exp(-lambda_l (T - s))`` on ``[0, T]``."""

    lambdas: np.ndarray
    horizon: float
    coefficients: tuple
    norm: float
    moment_residual: float = 0.0
    precision: str = "standard"
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def zero(cls, lambdas, T):
        lam = np.asarray(lambdas, dtype=float)
        return cls(lam, float(T), tuple(0.0 for _ in lam), 0.0)

    def __call__(self, t):
        return _evaluate_exponential_sum(self.coefficients, self.lambdas, self.horizon, t)

    @property
    def is_zero(self):
        return all(c == 0 for c in self.coefficients)

    def default_intervals(self):
        lam_max = float(np.max(np.abs(self.lambdas)))
        n = max(4096, int(math.ceil(80 * lam_max * self.horizon)))
        return n + n % 2

    def samples(self, n_intervals=None):
        """Uniform grid and sampled values (cached for the default grid)."""
        n = self.default_intervals() if n_intervals is None else n_intervals
        if n not in self._cache:
            t = np.linspace(0.0, self.horizon, n + 1)
            self._cache[n] = (t, self._uniform_values(n))
        return self._cache[n]

    def _uniform_values(self, n):
        """Values on ``n + 1`` uniform nodes; powers of ``exp(-lambda h)`` replace per-node exponentials."""
        if self.precision == "standard":
            return self(np.linspace(0.0, self.horizon, n + 1))
        with mpmath.workdps(self._dps() + 10 + int(math.log10(n + 1))):
            h = mpmath.mpf(self.horizon) / n
            ratios = [mpmath.exp(-mpmath.mpf(float(l)) * h) for l in self.lambdas]
            terms = [mpmath.mpf(c) for c in self.coefficients]
            out = np.empty(n + 1)
            # node n is t = T; walk backwards multiplying each term by its ratio
            for i in range(n, -1, -1):
                out[i] = float(mpmath.fsum(terms))
                terms = [a * r for a, r in zip(terms, ratios)]
            return out

    def quadrature_norm(self, n_intervals=None):
        from .metric_graph import simpson_weights

        t, u = self.samples(n_intervals)
        return math.sqrt(float(np.dot(simpson_weights(t.size - 1, self.horizon), u * u)))

    def exponential_moments(self, exponents):
        """``int_0^T exp(-mu (T - s)) u(s) ds`` for each ``mu`` in ``exponents``."""
        mu = np.asarray(exponents, dtype=float)
        if all(isinstance(c, (float, np.floating)) for c in self.coefficients):
            s = mu[:, None] + self.lambdas[None, :]
            with np.errstate(invalid="ignore", divide="ignore"):
                G = -np.expm1(-s * self.horizon) / s
            G[s == 0] = self.horizon
            return G @ np.asarray(self.coefficients, dtype=float)
        with mpmath.workdps(self._dps()):
            G = _gram_mp(
                [mpmath.mpf(float(x)) for x in mu],
                mpmath.mpf(self.horizon),
                [mpmath.mpf(float(x)) for x in self.lambdas],
            )
            c = mpmath.matrix([mpmath.mpf(x) for x in self.coefficients])
            v = G * c
            return np.array([float(v[i]) for i in range(len(mu))])

    def _dps(self):
        big = max((abs(c) for c in self.coefficients), default=0)
        return 30 + (int(mpmath.log10(big)) + 1 if big > 1 else 0)

    def __add__(self, other):
        if not (np.array_equal(self.lambdas, other.lambdas) and self.horizon == other.horizon):
            raise ValueError("controls live on different exponential bases")
        extended = self.precision == "extended" or other.precision == "extended"
        if extended:
            coeffs = tuple(mpmath.mpf(a) + mpmath.mpf(b) for a, b in zip(self.coefficients, other.coefficients))
        else:
            coeffs = tuple(float(a) + float(b) for a, b in zip(self.coefficients, other.coefficients))
        out = ControlSignal(self.lambdas, self.horizon, coeffs, 0.0, 0.0, "extended" if extended else "standard")
        object.__setattr__(out, "norm", out.exact_norm())
        return out

    def scaled(self, factor):
        coeffs = tuple(c * factor for c in self.coefficients)
        return ControlSignal(self.lambdas, self.horizon, coeffs, abs(factor) * self.norm, self.moment_residual, self.precision)

    def exact_norm(self):
        """``sqrt(c^T G c)`` in the coefficients' own precision."""
        if self.precision == "standard":
            c = np.asarray(self.coefficients, dtype=float)
            return math.sqrt(max(float(c @ gram_matrix(self.lambdas, self.horizon) @ c), 0.0))
        with mpmath.workdps(self._dps()):
            lm = [mpmath.mpf(float(x)) for x in self.lambdas]
            G = _gram_mp(lm, mpmath.mpf(self.horizon))
            c = mpmath.matrix([mpmath.mpf(x) for x in self.coefficients])
            return float(mpmath.sqrt(max((c.T * G * c)[0, 0], 0)))


@dataclass(frozen=True, eq=False)
class MomentProblem:
    """``int_0^T exp(lambda_k s) u(s) ds = d_k`` for k = 1..N.

    ``form='final'`` means the targets are already rescaled,
    ``int_0^T f_k u ds = targets[k]``; this avoids overflowing
    ``exp(lambda_k T)`` when the problem comes from a final-time residual.
    """

    lambdas: np.ndarray
    horizon: float
    targets: tuple
    form: str = "raw"
    provenance: str = "raw"

    def __post_init__(self):
        lam = _check_lambdas(self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if len(self.targets) != lam.size:
            raise ValueError("one target per exponent is required")
        if self.form not in ("raw", "final"):
            raise ValueError(f"unknown target form {self.form!r}")
        for d in self.targets:
            if not mpmath.isfinite(d):
                raise ValueError("targets must be finite")
        object.__setattr__(self, "targets", tuple(self.targets))


def solve_moment(problem: MomentProblem, precision="auto") -> ControlSignal:
    """Minimum-norm control solving the truncated moment problem.

    The reported residual is ``max_k |int exp(lambda_k s) u - d_k| / max_k |d_k|``
    in raw form, evaluated in the working precision.
    """
    lam, T = problem.lambdas, problem.horizon
    mode = _resolve_precision(precision, lam, T)
    n = lam.size
    if mode == "standard":
        if problem.form == "raw" and np.any(lam * T > 700):
            raise IllConditioned("exp(lambda T) overflows double precision; use extended")
        d = np.array([float(x) for x in problem.targets])
        dp = d * np.exp(-lam * T) if problem.form == "raw" else d
        G = gram_matrix(lam, T)
        try:
            c = sla.cho_solve(sla.cho_factor(G), dp)
        except np.linalg.LinAlgError as exc:
            raise IllConditioned(str(exc)) from exc
        raw_d = d if problem.form == "raw" else dp * np.exp(lam * T)
        res = np.abs(np.exp(lam * T) * (G @ c - dp))
        scale = max(np.abs(raw_d).max(), 1e-300)
        rel = float(res.max() / scale) if np.any(raw_d) else float(res.max())
        if rel > RESIDUAL_TOL:
            raise ResidualTooLarge(f"moment residual {rel:.3e} in double precision")
        norm = math.sqrt(max(float(c @ dp), 0.0))
        return ControlSignal(lam, float(T), tuple(float(x) for x in c), norm, rel, "standard")
    dps = _initial_dps(lam, T)
    while True:
        with mpmath.workdps(dps):
            lm = [mpmath.mpf(float(x)) for x in lam]
            Tm = mpmath.mpf(float(T))
            G = _gram_mp(lm, Tm)
            tg = [mpmath.mpf(x) for x in problem.targets]
            if problem.form == "raw":
                raw_d = tg
                dp = [mpmath.exp(-lm[k] * Tm) * tg[k] for k in range(n)]
            else:
                dp = tg
                raw_d = [mpmath.exp(lm[k] * Tm) * tg[k] for k in range(n)]
            dvec = mpmath.matrix(dp)
            try:
                c = mpmath.lu_solve(G, dvec)
            except ZeroDivisionError:
                c = None
            if c is not None:
                Gc = G * c
                res = max(abs(mpmath.exp(lm[k] * Tm) * (Gc[k] - dp[k])) for k in range(n))
                scale = max(abs(x) for x in raw_d)
                rel = res / scale if scale > 0 else res
                if rel < VERIFY_TOL:
                    norm = mpmath.sqrt(max(mpmath.fsum(c[k] * dp[k] for k in range(n)), 0))
                    return ControlSignal(
                        lam, float(T), tuple(c[k] for k in range(n)), float(norm), float(rel), "extended"
                    )
        dps *= 2
        if dps > MAX_DPS:
            raise ResidualTooLarge(f"moment residual not verified below {MAX_DPS} digits")


def null_control_targets(z0, coupling_column, n=None):
    """``d_k = <z0, phi_k> / <B phi_j, phi_k>`` for k = 1..n."""
    z0 = np.asarray(z0, dtype=float)
    b = np.asarray(coupling_column, dtype=float)
    n = z0.size if n is None else n
    from .control_op import COUPLING_FLOOR

    for k in range(n):
        if abs(b[k]) < COUPLING_FLOOR:
            raise ZeroCoupling(f"<B phi_j, phi_{k + 1}> = {b[k]!r} is numerically zero")
    return z0[:n] / b[:n]


def null_control_problem(z0, coupling_column, lambdas, T, n=None):
    d = null_control_targets(z0, coupling_column, n)
    return MomentProblem(np.asarray(lambdas, dtype=float)[: d.size], float(T), tuple(d), "raw", "null-control")


def moment_residuals_by_quadrature(u: ControlSignal, raw_targets, dps=None):
    """Independent check: ``int_0^T exp(lambda_k s) u(s) ds`` by mpmath Gauss-Legendre quadrature."""
    lam = u.lambdas
    dps = dps or (u._dps() + int(2 * np.max(np.abs(lam)) * u.horizon / math.log(10)) + 20)
    out = []
    with mpmath.workdps(dps):
        cm = [mpmath.mpf(x) for x in u.coefficients]
        lm = [mpmath.mpf(float(x)) for x in lam]
        Tm = mpmath.mpf(u.horizon)

        def uf(s):
            return mpmath.fsum(c * mpmath.exp(-l * (Tm - s)) for c, l in zip(cm, lm))

        pts = mpmath.linspace(0, Tm, 9)
        for k, d in enumerate(raw_targets):
            val = mpmath.quad(lambda s: mpmath.exp(lm[k] * s) * uf(s), pts)
            out.append(float(abs(val - mpmath.mpf(d))))
    return np.array(out)


# ---------------------------------------------------------------------------
# control cost


def control_cost(lambdas, coupling_column, j, T, n, samples=0, precision="auto", seed=0):
    """``K(T)``: spectral norm of ``z0 -> u`` (Euclidean coefficients to L2(0, T)).

    ``||u||^2 = d'^T G^-1 d'`` with ``d' = D z0``, ``D = diag(exp(-lambda_k T) / b_k)``,
    so ``K(T) = ||L^-1 D||_2`` where ``G = L L^T``.  Exponents are measured
    relative to ``lambda_j``.  With ``samples > 0`` the result is paired with a
    Monte-Carlo lower bound from random unit ``z0``.
    """
    lam = np.asarray(lambdas, dtype=float)[:n] - float(lambdas[j - 1])
    b = np.asarray(coupling_column, dtype=float)[:n]
    _check_lambdas(lam)
    from .control_op import COUPLING_FLOOR

    if np.any(np.abs(b) < COUPLING_FLOOR):
        raise ZeroCoupling("a coupling is numerically zero")
    mode = _resolve_precision(precision, lam, T)
    if mode == "standard":
        G = gram_matrix(lam, T)
        try:
            Lc = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise IllConditioned(str(exc)) from exc
        X = sla.solve_triangular(Lc, np.diag(np.exp(-lam * T) / b), lower=True)
    else:
        dps = _initial_dps(lam, T)
        with mpmath.workdps(dps):
            lm = [mpmath.mpf(float(x)) for x in lam]
            Tm = mpmath.mpf(float(T))
            Lc = mpmath.cholesky(_gram_mp(lm, Tm))
            D = mpmath.diag([mpmath.exp(-lm[k] * Tm) / b[k] for k in range(len(lm))])
            Xm = mpmath.inverse(Lc) * D
            X = np.array([[float(Xm[i, k]) for k in range(len(lm))] for i in range(len(lm))])
    K = float(np.linalg.norm(X, 2))
    if samples:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((len(lam), samples))
        z /= np.linalg.norm(z, axis=0)
        mc = float(np.max(np.linalg.norm(X @ z, axis=0)))
        return K, mc
    return K


def fit_cost_blowup(horizons, costs):
    """Least-squares ``log K = nu / T + c``; returns ``(nu, c, r2)``."""
    x = 1.0 / np.asarray(horizons, dtype=float)
    y = np.log(np.asarray(costs, dtype=float))
    nu, c = np.polyfit(x, y, 1)
    pred = nu * x + c
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(nu), float(c), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


# ---------------------------------------------------------------------------
# norm-shape diagnostic


@dataclass(frozen=True)
class NormShape:
    slope: float  # coefficient of sqrt(lambda_k) in the upper envelope
    offset: float
    penalty: np.ndarray
    excess: np.ndarray  # log||sigma_k|| + lambda_k T - M log(1 + gamma^2 / (a_k (a_k + 2 sqrt(lambda_1))))
    r2: float

    @property
    def bounded(self):
        return self.slope > 0 and np.isfinite(self.offset)


def norm_shape(family: BiorthogonalFamily, block: int, gamma: float, gaps: Sequence[float]):
    """Fit ``log||sigma_k|| <= -lambda_k T + M log(1 + gamma^2/(a_k(a_k + 2 sqrt(lambda_1)))) + c0 + c1 sqrt(lambda_k)``.

    ``(c0, c1)`` is the tightest affine upper envelope (linear program) with
    ``c1 >= 1e-6``; ``r2`` is the least-squares affine fit quality.
    """
    lam = family.lambdas
    s = np.sqrt(np.maximum(lam, 0.0))
    a = np.asarray(gaps, dtype=float)[: lam.size]
    if a.size < lam.size:
        a = np.concatenate([a, np.full(lam.size - a.size, a[-1])])
    penalty = block * np.log1p(gamma**2 / (a * (a + 2 * s[0])))
    y = family.log_norms + lam * family.horizon - penalty
    res = linprog(
        c=[lam.size, s.sum()],
        A_ub=np.column_stack([-np.ones_like(s), -s]),
        b_ub=-y,
        bounds=[(None, None), (1e-6, None)],
        method="highs",
    )
    c0, c1 = res.x
    slope, icpt = np.polyfit(s, y, 1)
    pred = icpt + slope * s
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return NormShape(float(c1), float(c0), penalty, y, r2)


# ---------------------------------------------------------------------------
# regularized (least-squares) variant


@dataclass(frozen=True, eq=False)
class ExponentialResponse:
    """Final moments ``int_0^T exp(-mu_k (T - s)) u(s) ds`` as a linear map of orthonormal control coordinates.

    Controls are ``u = sum_i alpha_i q_i`` with ``q = L^-1 f`` orthonormal in
    L2(0, T) (``G = L L^T``), so ``||u|| = ||alpha||``.  ``matrix[k, i]`` is
    the moment of ``q_i`` against the k-th row exponent.  With the row
    exponents equal to the basis exponents the matrix is ``L`` itself and an
    exact solve reproduces ``solve_moment``.
    """

    lambdas: np.ndarray
    horizon: float
    row_lambdas: np.ndarray
    matrix: np.ndarray
    _coeff_map: object = field(repr=False)
    dps: int = 16
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, lambdas, T, row_lambdas=None):
        lam = _check_lambdas(lambdas)
        rows = lam if row_lambdas is None else np.asarray(row_lambdas, dtype=float)
        dps = _initial_dps(lam, T)
        with mpmath.workdps(dps):
            lm = [mpmath.mpf(float(x)) for x in lam]
            rm = [mpmath.mpf(float(x)) for x in rows]
            Tm = mpmath.mpf(float(T))
            Lc = mpmath.cholesky(_gram_mp(lm, Tm))
            LinvT = mpmath.inverse(Lc).T
            P = _gram_mp(rm, Tm, lm) * LinvT
            mat = np.array([[float(P[k, i]) for i in range(lam.size)] for k in range(rows.size)])
        return cls(lam, float(T), rows, mat, LinvT, dps)

    def midpoint_values(self, n_steps):
        """``q_i`` at the midpoints of ``n_steps`` uniform steps, shape ``(n_steps, N)``.

        The orthonormal functions are moderate in size, but forming them from
        the exponentials cancels heavily, so this runs in working precision.
        """
        key = ("mid", n_steps)
        if key not in self._cache:
            n = self.lambdas.size
            with mpmath.workdps(self.dps):
                Tm = mpmath.mpf(self.horizon)
                h = Tm / n_steps
                Linv = self._coeff_map.T
                lm = [mpmath.mpf(float(x)) for x in self.lambdas]
                # last midpoint sits h/2 before T; step backwards by h
                f = [mpmath.exp(-l * h / 2) for l in lm]
                ratio = [mpmath.exp(-l * h) for l in lm]
                rows = [[Linv[i, l] for l in range(n)] for i in range(n)]
                out = np.empty((n_steps, n))
                for m in range(n_steps - 1, -1, -1):
                    for i in range(n):
                        out[m, i] = float(mpmath.fdot(rows[i], f))
                    f = [a * r for a, r in zip(f, ratio)]
            self._cache[key] = out
        return self._cache[key]

    def control(self, alpha) -> ControlSignal:
        alpha = np.asarray(alpha, dtype=float)
        with mpmath.workdps(self.dps):
            c = self._coeff_map * mpmath.matrix([mpmath.mpf(float(a)) for a in alpha])
            coeffs = tuple(c[i] for i in range(len(alpha)))
        return ControlSignal(self.lambdas, self.horizon, coeffs, float(np.linalg.norm(alpha)), 0.0, "extended")


def tikhonov_solve(A, rhs, damping):
    """``argmin ||A x - rhs||^2 + damping ||x||^2`` via the SVD of ``A``."""
    U, sv, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    if damping == 0:
        keep = sv > sv[0] * 1e-15
        filt = np.where(keep, 1.0 / np.where(keep, sv, 1.0), 0.0)
    else:
        filt = sv / (sv * sv + damping)
    return Vt.T @ (filt * (U.T @ np.asarray(rhs, dtype=float)))
