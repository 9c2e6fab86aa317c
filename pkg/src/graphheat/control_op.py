"""Multiplication control operators ``B psi = (mu_1 psi^1, ..., mu_N psi^N)``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import FirstCouplingZero, GraphSpecError, IndexOutOfRange
from .metric_graph import (
    DEFAULT_INTERVALS_PER_UNIT,
    Condition,
    GraphFunction,
    Kind,
    Sampled,
    edge_grid,
)
from .spectral import Spectrum

COUPLING_FLOOR = 1e-14
FIRST_COUPLING_TOL = 1e-12
RESONANCE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Profile:
    """Multiplier on one edge.

    ``cosine``: ``scale * cos(x pi / (2 L))``; ``monomial``: ``scale * x**power``;
    ``constant``: ``scale``; ``sampled``: values on a uniform grid over ``[0, L]``.
    """

    kind: str
    scale: float = 1.0
    power: int = 1
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("cosine", "monomial", "constant", "sampled"):
            raise GraphSpecError(f"unknown profile kind {self.kind!r}")
        if self.kind == "sampled":
            if self.values is None or len(self.values) < 2:
                raise GraphSpecError("sampled profile needs at least two values")
            object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __call__(self, x, length):
        x = np.asarray(x, dtype=float)
        if self.kind == "cosine":
            return self.scale * np.cos(x * math.pi / (2 * length))
        if self.kind == "monomial":
            return self.scale * x**self.power
        if self.kind == "constant":
            return np.full_like(x, self.scale)
        grid = np.linspace(0.0, length, self.values.size)
        return self.scale * np.interp(x, grid, self.values)

    def scaled(self, c):
        return Profile(self.kind, self.scale * c, self.power, self.values)

    @property
    def is_zero(self):
        if self.kind == "sampled":
            return self.scale == 0 or not np.any(self.values)
        return self.scale == 0


@dataclass(frozen=True)
class ControlOperator:
    profiles: Mapping[str, Profile] = field(default_factory=dict)

    @classmethod
    def zero(cls):
        return cls({})

    @classmethod
    def on_edge(cls, edge_id, kind, **kw):
        return cls({edge_id: Profile(kind, **kw)})

    @classmethod
    def from_spec(cls, spec):
        """``{"profiles": [{"edge": "e1", "kind": "cosine", "scale": 1.0, "power": 1}]}``."""
        if not isinstance(spec, Mapping) or "profiles" not in spec:
            raise GraphSpecError("operator spec needs a 'profiles' list")
        profiles = {}
        for i, p in enumerate(spec["profiles"]):
            try:
                edge = str(p["edge"])
                kind = str(p["kind"])
            except (KeyError, TypeError):
                raise GraphSpecError(f"field 'profiles[{i}]': needs 'edge' and 'kind'") from None
            profiles[edge] = Profile(
                kind,
                scale=float(p.get("scale", 1.0)),
                power=int(p.get("power", 1)),
                values=p.get("values"),
            )
        return cls(profiles)

    @property
    def target_edges(self):
        return tuple(e for e, p in self.profiles.items() if not p.is_zero)

    @property
    def is_zero(self):
        return not self.target_edges

    def scaled(self, c):
        return ControlOperator({e: p.scaled(c) for e, p in self.profiles.items()})

    def multiplier(self, graph, edge_id, x):
        p = self.profiles.get(edge_id)
        if p is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return p(x, graph.edge(edge_id).length)

    def apply(self, f: GraphFunction, graph, per_unit=DEFAULT_INTERVALS_PER_UNIT):
        """``B f`` sampled on the default quadrature grid of each edge."""
        pieces = {}
        for e in graph.edges:
            if e.id in self.profiles and e.id in f.pieces:
                x, _ = edge_grid(e.length, per_unit)
                pieces[e.id] = Sampled(self.multiplier(graph, e.id, x) * f.evaluate(graph, e.id, x))
        return GraphFunction(pieces)


def _check_index(spectrum, *idx):
    for i in idx:
        if not 1 <= i <= len(spectrum):
            raise IndexOutOfRange(f"mode index {i} outside 1..{len(spectrum)}")


def _single_profile(B):
    edges = B.target_edges
    if len(edges) != 1:
        return None, None
    return edges[0], B.profiles[edges[0]]


def _closed_form(B, spectrum, j, k):
    """Exact ``<B phi_1, phi_k>`` for the two explicit graph settings, else ``None``."""
    if 1 not in (j, k):
        return None
    k = j if k == 1 else k
    g = spectrum.graph
    edge_id, prof = _single_profile(B)
    if prof is None or not g.is_pure_neumann or spectrum.lambdas[0] != 0.0:
        return None
    e = g.edge(edge_id)
    L = e.length
    c0 = 1.0 / math.sqrt(g.total_length)
    lam = float(spectrum.lambdas[k - 1])
    w = math.sqrt(lam)
    mode = spectrum.modes[k - 1].get(edge_id)
    if g.kind == Kind.STAR and prof.kind == "cosine":
        if k == 1:
            return prof.scale * c0 * c0 * 2 * L / math.pi
        den = math.pi**2 - 4 * L * L * lam
        if abs(den) < RESONANCE_TOL * math.pi**2 or mode.shape != "cosine":
            return None
        return prof.scale * c0 * mode.amplitude * 2 * L * math.pi * math.cos(w * L) / den
    if g.kind == Kind.TADPOLE and e.is_loop and prof.kind == "monomial" and prof.power == 1:
        if k == 1:
            return prof.scale * c0 * c0 * L * L / 2
        if mode.shape == "cosine":
            return prof.scale * c0 * mode.amplitude * L * math.sin(w * L / 2) / w
        return prof.scale * c0 * mode.amplitude * (-L / w)
    return None


def coupling_by_quadrature(B, spectrum, j, k, per_unit=DEFAULT_INTERVALS_PER_UNIT):
    g = spectrum.graph
    total = 0.0
    for edge_id in B.target_edges:
        e = g.edge(edge_id)
        x, w = edge_grid(e.length, per_unit)
        mu = B.multiplier(g, edge_id, x)
        total += float(
            np.dot(w, mu * spectrum.evaluate(j, edge_id, x) * spectrum.evaluate(k, edge_id, x))
        )
    return total


def coupling(B: ControlOperator, spectrum: Spectrum, j: int, k: int) -> float:
    """``<B phi_j, phi_k>`` (1-based indices), exact where a closed form applies."""
    _check_index(spectrum, j, k)
    exact = _closed_form(B, spectrum, j, k)
    if exact is not None:
        return exact
    return coupling_by_quadrature(B, spectrum, j, k)


def couplings(B, spectrum, j, n):
    """Column ``[<B phi_j, phi_k>]_{k=1..n}``."""
    _check_index(spectrum, j, n)
    return np.array([coupling(B, spectrum, j, k) for k in range(1, n + 1)])


def coupling_matrix(B, spectrum, n, per_unit=DEFAULT_INTERVALS_PER_UNIT):
    """Galerkin matrix ``M[m, k] = <B phi_m, phi_k>`` over the first ``n`` modes."""
    _check_index(spectrum, n)
    g = spectrum.graph
    M = np.zeros((n, n))
    for edge_id in B.target_edges:
        e = g.edge(edge_id)
        x, w = edge_grid(e.length, per_unit)
        phi = spectrum.sample_matrix(edge_id, x, n)
        M += (phi * (w * B.multiplier(g, edge_id, x))) @ phi.T
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class SpreadingReport:
    j: int
    first_coupling: float
    q: float
    b: float
    worst_index: int
    failures: tuple[int, ...]
    couplings: np.ndarray = field(repr=False)
    lambdas: np.ndarray = field(repr=False)

    @property
    def passed(self):
        return abs(self.first_coupling) > FIRST_COUPLING_TOL and not self.failures and self.b > 0

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"


def verify_spreading(B, spectrum, j, n) -> SpreadingReport:
    """Check ``<B phi_j, phi_1> != 0`` and fit ``lambda_k^q |<B phi_j, phi_k>| >= b``.

    ``q`` is the least-squares slope of ``-log|coupling|`` against
    ``log lambda_k`` over ``k >= 2``; ``b`` is then the observed minimum.
    Couplings below 1e-14 are reported as failures and left out of the fit.
    """
    if n < 10:
        raise ValueError("verify_spreading needs at least 10 modes")
    c = couplings(B, spectrum, j, n)
    lam = np.asarray(spectrum.lambdas[:n])
    if abs(c[0]) <= FIRST_COUPLING_TOL:
        raise FirstCouplingZero(f"<B phi_{j}, phi_1> = {c[0]!r}")
    k = np.arange(2, n + 1)
    ck, lk = np.abs(c[1:]), lam[1:]
    failures = tuple(int(i) for i in k[ck < COUPLING_FLOOR])
    use = (ck >= COUPLING_FLOOR) & (lk > 0)
    q, _ = np.polyfit(np.log(lk[use]), -np.log(ck[use]), 1)
    scaled = lk[use] ** q * ck[use]
    worst = int(k[use][np.argmin(scaled)])
    return SpreadingReport(
        j=j,
        first_coupling=float(c[0]),
        q=float(q),
        b=float(scaled.min()),
        worst_index=worst,
        failures=failures,
        couplings=c,
        lambdas=lam,
    )
