"""Eigenvalues and eigenfunctions of the Laplacian on star and tadpole graphs.

Star graphs and the symmetric part of the tadpole reduce to one secular
equation.  Each branch ``l`` (an edge, or half of the tadpole loop) carries
``a_l g_l(w x)`` with ``g = cos`` at a Neumann tip and ``g = sin`` at a
Dirichlet tip.  Continuity at the centre plus flux balance give

    R(w) = sum_l c_l * g_l'(w L_l) / g_l(w L_l) = 0,

with ``c_l`` the branch multiplicity (2 for the loop halves).  Every term is
strictly decreasing between its poles, so between two consecutive distinct
poles ``R`` has exactly one root.  Where the poles of two or more branches
coincide the eigenvalue sits on the pole itself with multiplicity
``#coinciding - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from .errors import (
    EigensolverFailure,
    InsufficientSpectrum,
    MeshTooCoarse,
    MultiplicityDetected,
    PoleProximity,
    RootIsolationFailure,
    TruncationInsufficient,
    UnsupportedKind,
)
from .metric_graph import ClosedForm, Condition, GraphFunction, Kind, MetricGraph

MULTIPLICITY_TOL = 1e-9
POLE_MERGE_TOL = 1e-12


# ---------------------------------------------------------------------------
# secular functions as printed for the two explicit graphs


def secular_value(kind, x, lengths):
    """Star: ``sum_l tan(x L_l)``; tadpole-symmetric: ``2 tan(x L1/2) + tan(x L2)``."""
    x = float(x)
    lengths = [float(L) for L in lengths]
    kind = str(kind).lower().replace("_", "").replace("-", "")
    if kind == "star":
        args = [(x * L, L, 1.0) for L in lengths]
    elif kind in ("tadpolesymmetric", "tadpole"):
        L1, L2 = lengths
        args = [(x * L1 / 2, L1 / 2, 2.0), (x * L2, L2, 1.0)]
    else:
        raise UnsupportedKind(f"no secular function for kind {kind!r}")
    total = 0.0
    for arg, L, weight in args:
        m = math.floor(arg / math.pi)  # nearest pole is (m + 1/2) pi
        pole = (m + 0.5) * math.pi / L
        if abs(x - pole) <= 1e-12 * x:
            raise PoleProximity(f"x={x!r} is within 1e-12*x of the tangent pole {pole!r}")
        total += weight * math.tan(arg)
    return total


@dataclass(frozen=True)
class _Branch:
    length: float
    weight: float
    trig: str  # "cos" (Neumann tip) or "sin" (Dirichlet tip)

    def g(self, w):
        return math.cos(w * self.length) if self.trig == "cos" else math.sin(w * self.length)

    def dg(self, w):
        # d/dx of g(w x) at x = L, divided by w
        return -math.sin(w * self.length) if self.trig == "cos" else math.cos(w * self.length)

    def ratio(self, w):
        return self.weight * self.dg(w) / self.g(w)

    def dratio(self, w):
        g = self.g(w)
        return -self.weight * self.length / (g * g)

    def square_integral(self, w):
        # int_0^L g(w x)^2 dx
        s = math.sin(2 * w * self.length) / (4 * w)
        return self.length / 2 + (s if self.trig == "cos" else -s)

    def poles(self, upto):
        off = 0.5 if self.trig == "cos" else 1.0
        out = []
        m = 0
        while True:
            p = (m + off) * math.pi / self.length
            if p > upto:
                return out
            out.append(p)
            m += 1


def _secular(branches, w):
    return sum(b.ratio(w) for b in branches)


def _dsecular(branches, w):
    return sum(b.dratio(w) for b in branches)


def _isolate_root(branches, a, b):
    """The unique root of the decreasing secular function on the open interval (a, b)."""
    width = b - a
    delta = 1e-3 * width
    while True:
        lo = a + delta
        if _secular(branches, lo) > 0:
            break
        delta *= 1e-3
        if delta < 1e-15 * max(b, 1.0):
            raise RootIsolationFailure(f"no positive value next to left pole of bracket ({a}, {b})")
    delta = 1e-3 * width
    while True:
        hi = b - delta
        if _secular(branches, hi) < 0:
            break
        delta *= 1e-3
        if delta < 1e-15 * max(b, 1.0):
            raise RootIsolationFailure(f"no negative value next to right pole of bracket ({a}, {b})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _secular(branches, mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * hi:
            break
    x = 0.5 * (lo + hi)
    for _ in range(60):
        f = _secular(branches, x)
        if f == 0.0:
            break
        step = f / _dsecular(branches, x)
        nx = x - step
        if not (lo <= nx <= hi):
            break
        if abs(step) <= 2e-16 * x:
            x = nx
            break
        x = nx
    return x


def _branch_modes(branches, count, include_zero):
    """At least ``count`` eigen-frequencies (with multiplicity) and branch amplitudes.

    The list is complete up to its last entry, so multiplicity flags computed
    on it are reliable before truncation.
    """
    total = sum(b.length * b.weight for b in branches)
    upto = (count + 3) * math.pi / total * 1.5 + max(math.pi / b.length for b in branches)
    while True:
        poles = sorted((p, i) for i, b in enumerate(branches) for p in b.poles(upto))
        groups = []
        for p, i in poles:
            if groups and abs(p - groups[-1][0]) <= POLE_MERGE_TOL * max(p, 1.0):
                groups[-1][1].append(i)
            else:
                groups.append((p, [i]))
        found = []
        if include_zero:
            found.append((0.0, None))
        has_dirichlet = any(b.trig == "sin" for b in branches)
        left = 0.0
        for p, members in groups:
            if left > 0.0 or has_dirichlet:
                w = _isolate_root(branches, left, p)
                found.append((w, _root_amplitudes(branches, w)))
            if len(members) >= 2:
                for amps in _pole_amplitudes(branches, p, members):
                    found.append((p, amps))
            left = p
        if len(found) > count:
            found.sort(key=lambda t: t[0])
            return found
        upto *= 1.6


def _root_amplitudes(branches, w):
    g = np.array([b.g(w) for b in branches])
    a = np.array([np.prod(np.delete(g, i)) for i in range(len(branches))])
    mass = sum(b.weight * ai * ai * b.square_integral(w) for b, ai in zip(branches, a))
    a = a / math.sqrt(mass)
    return _fix_sign(a)


def _pole_amplitudes(branches, w, members):
    """Orthonormal amplitude vectors for an eigenvalue sitting on a shared pole."""
    n = np.array([branches[i].weight * branches[i].dg(w) for i in members])
    scale = np.array([math.sqrt(branches[i].weight * branches[i].length / 2) for i in members])
    v = n / scale
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(len(members))]))
    out = []
    for col in range(1, len(members)):
        b = q[:, col]
        a = np.zeros(len(branches))
        a[members] = b / scale
        out.append(_fix_sign(a))
    return out


def _fix_sign(a):
    nz = np.flatnonzero(np.abs(a) > 1e-14)
    if nz.size and a[nz[0]] < 0:
        a = -a
    return a


# ---------------------------------------------------------------------------
# spectrum container


@dataclass(frozen=True)
class EdgeMode:
    """``amplitude * shape(omega * (x - shift))`` on one edge."""

    amplitude: float
    shape: str  # "cosine" | "sine" | "constant"
    shift: float = 0.0

    def closed_form(self, omega):
        if self.shape == "constant":
            return ClosedForm("constant", self.amplitude)
        return ClosedForm(self.shape, self.amplitude, omega, self.shift)

    def value(self, omega, x):
        return self.closed_form(omega)(x)

    def derivative(self, omega, x):
        x = np.asarray(x, dtype=float)
        a = self.amplitude
        if self.shape == "constant":
            return np.zeros_like(x)
        if self.shape == "cosine":
            return -a * omega * np.sin(omega * (x - self.shift))
        return a * omega * np.cos(omega * (x - self.shift))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ordered eigenvalues with edge-wise closed-form eigenfunctions.

    Mode indices in the public methods are 1-based, matching ``lambda_1``.
    """

    graph: MetricGraph
    lambdas: np.ndarray
    modes: tuple[Mapping[str, EdgeMode], ...]
    symmetry: tuple[str | None, ...]
    multiplicity: tuple[int, ...]
    source: str = "secular"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.lambdas)

    @property
    def omegas(self):
        return np.sqrt(np.maximum(self.lambdas, 0.0))

    @property
    def is_simple(self):
        return all(m == 1 for m in self.multiplicity)

    def require_simple(self, upto=None):
        n = len(self) if upto is None else upto
        bad = [k + 1 for k in range(n) if self.multiplicity[k] > 1]
        if bad:
            raise MultiplicityDetected(f"repeated eigenvalues at indices {bad}")

    def truncated(self, n):
        return Spectrum(
            self.graph,
            self.lambdas[:n].copy(),
            self.modes[:n],
            self.symmetry[:n],
            self.multiplicity[:n],
            self.source,
        )

    def eigenfunction(self, k):
        w = float(self.omegas[k - 1])
        return GraphFunction({eid: m.closed_form(w) for eid, m in self.modes[k - 1].items()})

    def evaluate(self, k, edge_id, x):
        m = self.modes[k - 1].get(edge_id)
        if m is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return m.value(float(self.omegas[k - 1]), x)

    def derivative(self, k, edge_id, x):
        m = self.modes[k - 1].get(edge_id)
        if m is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return m.derivative(float(self.omegas[k - 1]), x)

    def sample_matrix(self, edge_id, x, n=None):
        """Rows: first ``n`` eigenfunctions evaluated at ``x`` on ``edge_id``."""
        n = len(self) if n is None else n
        return np.array([self.evaluate(k, edge_id, x) for k in range(1, n + 1)])

    def vertex_residuals(self, k):
        """Worst continuity mismatch and worst flux imbalance over internal vertices."""
        g = self.graph
        cont, flux = 0.0, 0.0
        for v in g.internal_vertices:
            values, total = [], 0.0
            for e in g.edges:
                if e.end == v.id:
                    values.append(float(self.evaluate(k, e.id, e.length)))
                    total += float(self.derivative(k, e.id, e.length))
                if e.start == v.id:
                    values.append(float(self.evaluate(k, e.id, 0.0)))
                    total -= float(self.derivative(k, e.id, 0.0))
            cont = max(cont, max(values) - min(values))
            flux = max(flux, abs(total))
        return cont, flux


def _flag_multiplicity(omegas):
    n = len(omegas)
    mult = [1] * n
    i = 0
    while i < n:
        j = i + 1
        while j < n and omegas[j] - omegas[i] <= MULTIPLICITY_TOL * max(1.0, omegas[i]):
            j += 1
        for m in range(i, j):
            mult[m] = j - i
        i = j
    return tuple(mult)


def _star_spectrum(graph, count):
    c = [v for v in graph.internal_vertices][0]
    if c.condition != Condition.NEUMANN_KIRCHHOFF:
        raise UnsupportedKind("star centre must be Neumann-Kirchhoff")
    branches = []
    for e in graph.edges:
        tip = graph.vertex(e.start).condition
        branches.append(_Branch(e.length, 1.0, "cos" if tip == Condition.NEUMANN else "sin"))
    pure_neumann = graph.is_pure_neumann
    found = _branch_modes(branches, count, pure_neumann)
    lambdas, modes = [], []
    for w, amps in found:
        lambdas.append(w * w)
        if amps is None:
            a0 = 1.0 / math.sqrt(graph.total_length)
            modes.append({e.id: EdgeMode(a0, "constant") for e in graph.edges})
            continue
        modes.append(
            {
                e.id: EdgeMode(float(a), "cosine" if b.trig == "cos" else "sine")
                for e, b, a in zip(graph.edges, branches, amps)
            }
        )
    mult = _flag_multiplicity(np.sqrt(lambdas))
    return Spectrum(
        graph, np.array(lambdas[:count]), tuple(modes[:count]), (None,) * count, mult[:count]
    )


def _tadpole_spectrum(graph, count):
    loop = next(e for e in graph.edges if e.is_loop)
    tail = next(e for e in graph.edges if not e.is_loop)
    L1, L2 = loop.length, tail.length
    tip = graph.vertex(tail.start).condition
    branches = [
        _Branch(L1 / 2, 2.0, "cos"),
        _Branch(L2, 1.0, "cos" if tip == Condition.NEUMANN else "sin"),
    ]
    pure_neumann = tip == Condition.NEUMANN
    symmetric = _branch_modes(branches, count, pure_neumann)
    entries = []
    for w, amps in symmetric:
        if amps is None:
            a0 = 1.0 / math.sqrt(L1 + L2)
            mode = {loop.id: EdgeMode(a0, "constant"), tail.id: EdgeMode(a0, "constant")}
        else:
            mode = {
                loop.id: EdgeMode(float(amps[0]), "cosine", L1 / 2),
                tail.id: EdgeMode(float(amps[1]), "cosine" if tip == Condition.NEUMANN else "sine"),
            }
        entries.append((w, mode, "symmetric"))
    for k in range(1, count + 1):
        w = 2 * k * math.pi / L1
        mode = {loop.id: EdgeMode(math.sqrt(2 / L1), "sine"), tail.id: EdgeMode(0.0, "sine")}
        entries.append((w, mode, "skew-symmetric"))
    entries.sort(key=lambda t: t[0])
    omegas = np.array([t[0] for t in entries])
    mult = _flag_multiplicity(omegas)
    entries = entries[:count]
    return Spectrum(
        graph,
        omegas[:count] ** 2,
        tuple(t[1] for t in entries),
        tuple(t[2] for t in entries),
        mult[:count],
    )


def _interval_spectrum(graph, count):
    e = graph.edges[0]
    L = e.length
    left = graph.vertex(e.start).condition
    right = graph.vertex(e.end).condition
    D, N = Condition.DIRICHLET, Condition.NEUMANN
    amp = math.sqrt(2 / L)
    lambdas, modes = [], []
    for m in range(count):
        if left == N and right == N:
            w = m * math.pi / L
            mode = EdgeMode(1 / math.sqrt(L), "constant") if m == 0 else EdgeMode(amp, "cosine")
        elif left == D and right == D:
            w = (m + 1) * math.pi / L
            mode = EdgeMode(amp, "sine")
        elif left == D:
            w = (m + 0.5) * math.pi / L
            mode = EdgeMode(amp, "sine")
        else:
            w = (m + 0.5) * math.pi / L
            mode = EdgeMode(amp, "cosine")
        lambdas.append(w * w)
        modes.append({e.id: mode})
    return Spectrum(graph, np.array(lambdas), tuple(modes), (None,) * count, (1,) * count)


def compute_spectrum(graph: MetricGraph, count: int) -> Spectrum:
    """First ``count`` eigenpairs (multiplicities repeated) of the graph Laplacian.

    Supports star graphs (Neumann or Dirichlet tips), tadpoles and single
    intervals.  Other topologies raise :class:`UnsupportedKind`; use
    :func:`discretize_oracle` for them.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if graph.kind == Kind.STAR:
        return _star_spectrum(graph, count)
    if graph.kind == Kind.TADPOLE:
        return _tadpole_spectrum(graph, count)
    if len(graph.edges) == 1 and not graph.edges[0].is_loop:
        return _interval_spectrum(graph, count)
    raise UnsupportedKind(f"no secular solver for {graph.kind.value} graphs")


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass(frozen=True, eq=False)
class OracleSpectrum:
    lambdas: np.ndarray
    mesh: float
    grids: Mapping[str, np.ndarray]
    vectors: Mapping[str, np.ndarray]  # edge id -> (K, n_e + 1) samples


def discretize_oracle(graph: MetricGraph, mesh: float, count: int) -> OracleSpectrum:
    """Second-difference Laplacian on per-edge uniform grids.

    Each edge gets ``ceil(L/h)`` intervals.  Vertex values are shared
    unknowns, so continuity is built in; the vertex row is the lumped flux
    balance ``sum (u_v - u_nb)/h_e = lambda * (sum h_e/2) * u_v``, which is
    the ghost-point scheme at Neumann tips.  Dirichlet vertices are removed.
    The pencil ``K u = lambda M u`` with diagonal ``M`` is symmetrised as
    ``M^-1/2 K M^-1/2``.
    """
    min_len = min(e.length for e in graph.edges)
    if mesh > min_len / 16:
        raise MeshTooCoarse(f"mesh {mesh} exceeds min edge length / 16 = {min_len / 16}")
    index = {}
    n_unknown = 0
    for v in graph.vertices:
        if v.condition != Condition.DIRICHLET:
            index[("v", v.id)] = n_unknown
            n_unknown += 1
    chains = {}
    for e in graph.edges:
        n = int(math.ceil(e.length / mesh - 1e-9))
        nodes = [index.get(("v", e.start))]
        for i in range(1, n):
            nodes.append(n_unknown)
            n_unknown += 1
        nodes.append(index.get(("v", e.end)))
        chains[e.id] = (n, nodes)
    rows, cols, vals = [], [], []
    mass = np.zeros(n_unknown)
    for e in graph.edges:
        n, nodes = chains[e.id]
        h = e.length / n
        for a, b in zip(nodes[:-1], nodes[1:]):
            for p in (a, b):
                if p is not None:
                    rows.append(p)
                    cols.append(p)
                    vals.append(1.0 / h)
                    mass[p] += h / 2
            if a is not None and b is not None:
                rows += [a, b]
                cols += [b, a]
                vals += [-1.0 / h, -1.0 / h]
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n_unknown, n_unknown))
    s = 1.0 / np.sqrt(mass)
    S = sp.diags(s) @ K @ sp.diags(s)
    try:
        if n_unknown <= 400:
            w, V = np.linalg.eigh(S.toarray())
            w, V = w[:count], V[:, :count]
        else:
            w, V = spla.eigsh(S.tocsc(), k=count, sigma=-1.0, which="LM")
            order = np.argsort(w)
            w, V = w[order], V[:, order]
    except (spla.ArpackNoConvergence, np.linalg.LinAlgError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    U = V * s[:, None]
    grids, vectors = {}, {}
    for e in graph.edges:
        n, nodes = chains[e.id]
        grids[e.id] = np.linspace(0.0, e.length, n + 1)
        samples = np.zeros((count, n + 1))
        for i, p in enumerate(nodes):
            if p is not None:
                samples[:, i] = U[p, :]
        vectors[e.id] = samples
    return OracleSpectrum(np.maximum(w, 0.0) if w[0] > -1e-10 else w, mesh, grids, vectors)


# ---------------------------------------------------------------------------
# gap diagnostics


def _as_lambdas(spectrum):
    if isinstance(spectrum, (Spectrum, OracleSpectrum)):
        return np.asarray(spectrum.lambdas, dtype=float)
    return np.asarray(spectrum, dtype=float)


def block_gap(spectrum, block):
    s = np.sqrt(np.maximum(_as_lambdas(spectrum), 0.0))
    return float(np.min(s[block:] - s[:-block]))


def running_gap(spectrum):
    """``a_k``: the largest nonincreasing sequence below the consecutive root gaps."""
    s = np.sqrt(np.maximum(_as_lambdas(spectrum), 0.0))
    return np.minimum.accumulate(np.diff(s))


@dataclass(frozen=True)
class GapReport:
    block_size: int
    block_gap: float
    weak_gap_C: float
    weak_gap_p: float
    weak_gap_ls_C: float
    weak_gap_ls_p: float
    weak_gap_ls_residual: float
    weak_gap_failure: bool
    zero_gap_indices: tuple[int, ...]
    min_gap: float
    weyl_C1: float
    weyl_C2: float
    counting: tuple[tuple[int, float, int], ...]  # (k, rho, N_k(rho))

    @property
    def block_gap_ok(self):
        return self.block_gap > 0


def gap_report(spectrum, block: int) -> GapReport:
    """Block gap, weak-gap fit and Weyl envelope for a computed spectrum.

    The weak-gap pair ``(C, p)`` is the tightest lower envelope
    ``C k^-p <= sqrt(lambda_{k+1}) - sqrt(lambda_k)`` with ``p >= 0`` (a
    linear program in log-log coordinates); the plain least-squares slope is
    reported alongside.  Zero gaps (repeated eigenvalues) are excluded from the
    fits and flagged.
    """
    lam = _as_lambdas(spectrum)
    if lam.size < max(10, 2 * block):
        raise InsufficientSpectrum(f"need at least {max(10, 2 * block)} eigenvalues, have {lam.size}")
    s = np.sqrt(np.maximum(lam, 0.0))
    gaps = np.diff(s)
    k = np.arange(1, gaps.size + 1)
    zero = gaps <= MULTIPLICITY_TOL * np.maximum(1.0, s[1:])
    ok = ~zero
    y = np.log(gaps[ok])
    x = np.log(k[ok])
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(x, y, 1)
        resid = float(np.sqrt(np.mean((y - (icpt + slope * x)) ** 2)))
        ls_p, ls_C = float(-slope), float(math.exp(icpt))
        res = linprog(
            c=[-x.size, x.sum()],
            A_ub=np.column_stack([np.ones_like(x), -x]),
            b_ub=y,
            bounds=[(None, None), (0, None)],
            method="highs",
        )
        env_c, env_p = res.x
        env_C = float(math.exp(env_c))
    else:
        ls_p = ls_C = resid = env_p = env_C = float("nan")
    idx = np.arange(1, lam.size + 1)
    ratios = lam[1:] / idx[1:] ** 2
    counting = []
    a = running_gap(lam)
    for kk in range(1, lam.size):
        rho = 0.999 * a[kk - 1] * (a[kk - 1] + 2 * s[0])
        if rho > 0 and lam[-1] >= lam[kk - 1] + rho:
            counting.append((kk, float(rho), counting_function(lam, kk, rho)))
    return GapReport(
        block_size=block,
        block_gap=block_gap(lam, block),
        weak_gap_C=env_C,
        weak_gap_p=float(env_p),
        weak_gap_ls_C=ls_C,
        weak_gap_ls_p=ls_p,
        weak_gap_ls_residual=resid,
        weak_gap_failure=bool(zero.any()),
        zero_gap_indices=tuple(int(i) for i in k[zero]),
        min_gap=float(gaps.min()),
        weyl_C1=float(ratios.min()),
        weyl_C2=float(ratios.max()),
        counting=tuple(counting),
    )


def counting_function(spectrum, k: int, rho: float) -> int:
    """``#{m : 0 < |lambda_m - lambda_k| <= rho}`` within the computed spectrum."""
    lam = _as_lambdas(spectrum)
    if not 1 <= k <= lam.size:
        raise IndexError(f"k={k} outside 1..{lam.size}")
    if rho <= 0:
        raise ValueError("rho must be positive")
    lk = lam[k - 1]
    if lam[-1] < lk + rho:
        raise TruncationInsufficient(
            f"largest computed eigenvalue {lam[-1]} < lambda_k + rho = {lk + rho}"
        )
    d = np.abs(lam - lk)
    tiny = 1e-12 * max(1.0, abs(lk))
    return int(np.count_nonzero((d > tiny) & (d <= rho * (1 + 1e-12))))


def secular_count_below(graph, x, count_hint=64):
    """Number of eigenvalues strictly below ``x**2`` according to the secular solver."""
    n = count_hint
    while True:
        spec = compute_spectrum(graph, n)
        if spec.lambdas[-1] >= x * x:
            return int(np.count_nonzero(spec.lambdas < x * x))
        n *= 2


def amplitude_sums(spectrum: Spectrum) -> Sequence[float]:
    """``sum_l (a^l)^2 L_l`` per mode; equals 2 for every non-constant mode."""
    out = []
    for mode in spectrum.modes:
        total = 0.0
        for e in spectrum.graph.edges:
            m = mode.get(e.id)
            if m is not None:
                total += m.amplitude**2 * e.length
        out.append(total)
    return out
