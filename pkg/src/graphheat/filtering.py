"""Invariant subspaces for the equal-arm Dirichlet star with four edges.

Edges ``e1..e3`` have length 1 and ``e4`` has length ``L``; the tips are
Dirichlet and the centre carries Neumann-Kirchhoff conditions.  The functions

    f_k = (sin(k pi x), -sin(k pi x), 0, 0)

are unit-norm eigenfunctions with eigenvalue ``k^2 pi^2``.  Their closed span
``H`` is invariant under multipliers acting identically on the first two
edges, so control on ``H`` reduces to an interval problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control_op import ControlOperator, Profile
from .errors import NotInvariant, UnequalLengths, ValidationError
from .metric_graph import (
    DEFAULT_INTERVALS_PER_UNIT,
    ClosedForm,
    Condition,
    GraphFunction,
    Kind,
    MetricGraph,
    edge_grid,
    inner_product,
    interval_graph,
    star_graph,
)

INVARIANCE_TOL = 1e-10
ARM_IDS = ("e1", "e2", "e3", "e4")
# amplitudes of the generators on (e1, e2, e3, e4), already unit norm for sin(k pi x)
F_TEMPLATE = (1.0, -1.0, 0.0, 0.0)
# orthonormal complement inside the same eigenspace: zero flux sum, orthogonal to F
G_TEMPLATE = (1 / math.sqrt(3), 1 / math.sqrt(3), -2 / math.sqrt(3), 0.0)
# unnormalized variant with nonzero flux sum, kept for comparison only
G_TEMPLATE_ALT = (math.sqrt(0.5), math.sqrt(0.5), -1.0, 0.0)


def filtering_star(tail_length):
    return star_graph([1.0, 1.0, 1.0, float(tail_length)], tip_condition="D")


def _check_star(graph: MetricGraph):
    if graph.kind != Kind.STAR or len(graph.edges) != 4:
        raise ValidationError("filtering needs the four-edge star")
    for eid in ARM_IDS[:3]:
        if abs(graph.edge(eid).length - 1.0) > 1e-12:
            raise UnequalLengths(f"edge {eid} has length {graph.edge(eid).length:g}, expected 1")
    for v in graph.external_vertices:
        if v.condition != Condition.DIRICHLET:
            raise ValidationError("filtering uses Dirichlet conditions at the tips")


def _template_function(template, k):
    return GraphFunction(
        {eid: ClosedForm("sine", a, k * math.pi) for eid, a in zip(ARM_IDS, template) if a != 0.0}
    )


@dataclass(frozen=True, eq=False)
class InvariantSubspace:
    graph: MetricGraph
    modes: int
    template: tuple = F_TEMPLATE
    reduced_lambdas: np.ndarray = field(init=False)

    def __post_init__(self):
        k = np.arange(1, self.modes + 1)
        object.__setattr__(self, "reduced_lambdas", (k * math.pi) ** 2)

    def generator(self, k) -> GraphFunction:
        """``f_k`` (1-based)."""
        if not 1 <= k <= self.modes:
            raise ValidationError(f"generator index {k} outside 1..{self.modes}")
        return _template_function(self.template, k)

    def complement(self, k) -> GraphFunction:
        """Unit ``g_k`` spanning the rest of the ``k^2 pi^2`` eigenspace."""
        return _template_function(G_TEMPLATE, k)

    def gram(self, per_unit=DEFAULT_INTERVALS_PER_UNIT, exact=False):
        """Gram matrix of the generators; by quadrature unless ``exact``."""
        fs = [self.generator(k) for k in range(1, self.modes + 1)]
        if not exact:
            fs = [_sampled(self.graph, f, per_unit) for f in fs]
        G = np.empty((self.modes, self.modes))
        for i, f in enumerate(fs):
            for j, g in enumerate(fs):
                G[i, j] = inner_product(f, g, self.graph, per_unit)
        return G

    def vertex_residuals(self, k):
        """Max Dirichlet tip value, centre continuity spread and centre flux sum for ``f_k``."""
        w = k * math.pi
        amps = np.array(self.template)
        lengths = np.array([self.graph.edge(e).length for e in ARM_IDS])
        tips = np.abs(amps * np.sin(0.0)).max()
        centre_vals = amps * np.sin(w * lengths)
        centre_vals[amps == 0] = 0.0
        flux = float(np.sum(amps * w * np.cos(w * lengths)))
        return float(tips), float(np.ptp(centre_vals)), abs(flux)

    @staticmethod
    def project_samples(values):
        """Orthogonal projection onto ``H`` of per-edge samples ``{edge: array}``."""
        d = 0.5 * (values["e1"] - values["e2"])
        return {"e1": d, "e2": -d, "e3": np.zeros_like(values["e3"]), "e4": np.zeros_like(values["e4"])}

    def coordinates(self, psi: GraphFunction, per_unit=DEFAULT_INTERVALS_PER_UNIT):
        return np.array([inner_product(psi, self.generator(k), self.graph, per_unit) for k in range(1, self.modes + 1)])


def _sampled(graph, f, per_unit):
    return GraphFunction.from_callables(
        graph, {e.id: (lambda x, eid=e.id: f.evaluate(graph, eid, x)) for e in graph.edges}, per_unit
    )


def build_invariant_subspace(graph_or_tail, modes) -> InvariantSubspace:
    """Generators ``f_1..f_K`` for the star ``(1, 1, 1, L)``; accepts the graph or ``L``."""
    graph = graph_or_tail if isinstance(graph_or_tail, MetricGraph) else filtering_star(graph_or_tail)
    _check_star(graph)
    if modes < 1:
        raise ValidationError("need at least one generator")
    return InvariantSubspace(graph, int(modes))


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    worst_residual: float
    samples: int

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"


def check_B_invariance(B: ControlOperator, subspace: InvariantSubspace, samples=20, seed=0,
                       per_unit=DEFAULT_INTERVALS_PER_UNIT) -> InvarianceReport:
    """Apply ``B`` to random unit elements of ``span{f_k}`` and measure the part left outside ``H``."""
    g = subspace.graph
    rng = np.random.default_rng(seed)
    grids = {e.id: edge_grid(e.length, per_unit) for e in g.edges}
    worst = 0.0
    for _ in range(samples):
        a = rng.standard_normal(subspace.modes)
        a /= np.linalg.norm(a)
        vals = {}
        for eid, (x, _) in grids.items():
            amp = subspace.template[ARM_IDS.index(eid)]
            psi = amp * sum(a[k] * np.sin((k + 1) * math.pi * x) for k in range(subspace.modes))
            vals[eid] = B.multiplier(g, eid, x) * psi
        proj = InvariantSubspace.project_samples(vals)
        out = sum(float(np.dot(w, (vals[eid] - proj[eid]) ** 2)) for eid, (_, w) in grids.items())
        worst = max(worst, math.sqrt(max(out, 0.0)))
    return InvarianceReport(worst < INVARIANCE_TOL, worst, samples)


@dataclass(frozen=True, eq=False)
class ReducedProblem:
    """Interval ``(0, 1)`` with Dirichlet ends and the multiplier of the first arm.

    Reduced coefficients on ``sqrt(2) sin(k pi x)`` equal the coordinates on
    ``f_k``, so lifting is the identity on coefficient vectors.
    """

    graph: MetricGraph
    operator: ControlOperator
    lambdas: np.ndarray
    subspace: InvariantSubspace

    def lift(self, coeffs):
        """Full-star function ``sum_k c_k f_k``."""
        c = np.asarray(coeffs, dtype=float)
        pieces = {}
        for eid, amp in zip(ARM_IDS, self.subspace.template):
            if amp:
                pieces[eid] = lambda x, amp=amp: amp * sum(
                    c[k] * np.sin((k + 1) * math.pi * np.asarray(x, dtype=float)) for k in range(c.size)
                )
        return GraphFunction.from_callables(self.subspace.graph, pieces)

    def to_spec(self):
        p = self.operator.profiles["e1"]
        return {
            "graph": self.graph.to_spec(),
            "operator": {"profiles": [{"edge": "e1", "kind": p.kind, "scale": p.scale, "power": p.power}]},
            "reduced_lambdas": [float(x) for x in self.lambdas],
            "tail_length": self.subspace.graph.edge("e4").length,
        }


def reduce_to_interval(subspace: InvariantSubspace, B: ControlOperator, samples=20) -> ReducedProblem:
    report = check_B_invariance(B, subspace, samples)
    if not report.passed:
        raise NotInvariant(f"B leaves H: worst residual {report.worst_residual:.3e}")
    prof = B.profiles.get("e1")
    if prof is None or prof.is_zero:
        prof = Profile("constant", 0.0)
    reduced = ControlOperator({"e1": prof})
    return ReducedProblem(interval_graph(1.0, "D", "D"), reduced, subspace.reduced_lambdas.copy(), subspace)


def arm_square_operator(tail_profile: Profile | None = None):
    """``B psi = (x^2 psi^1, x^2 psi^2, 0, mu_4 psi^4)``."""
    profiles = {"e1": Profile("monomial", power=2), "e2": Profile("monomial", power=2)}
    if tail_profile is not None:
        profiles["e4"] = tail_profile
    return ControlOperator(profiles)


def reduced_coupling_oracle(k):
    """Exact ``<x^2 sqrt2 sin(pi x), sqrt2 sin(k pi x)>`` on ``(0, 1)``."""
    if k == 1:
        return 1.0 / 3.0 - 1.0 / (2 * math.pi**2)
    sign = 1.0 if (k + 1) % 2 == 0 else -1.0
    return 2 * sign * (1.0 / ((k - 1) ** 2 * math.pi**2) - 1.0 / ((k + 1) ** 2 * math.pi**2))


@dataclass(frozen=True, eq=False)
class FullStarModel:
    """Galerkin model of the whole four-edge star with the map to ``H`` coordinates.

    ``frame[k, m] = <f_{k+1}, phi_m>``; the truncation keeps whole eigenspaces,
    so every ``f_k`` with ``k^2 pi^2 <= lambda_N`` lies in the span exactly.
    """

    lambdas: np.ndarray
    coupling_matrix: np.ndarray
    frame: np.ndarray

    def embed(self, h_coeffs):
        h = np.asarray(h_coeffs, dtype=float)
        return self.frame[: h.size].T @ h

    def outside_energy(self, coeffs):
        """Squared norm of the part of the state orthogonal to ``H``."""
        c = np.atleast_2d(coeffs)
        inside = (c @ self.frame.T) @ self.frame
        return np.sum((c - inside) ** 2, axis=1)


def full_star_model(subspace: InvariantSubspace, B: ControlOperator, modes=30) -> FullStarModel:
    from .control_op import coupling_matrix
    from .spectral import compute_spectrum

    spec = compute_spectrum(subspace.graph, modes + 2)
    n = modes
    # do not split a double eigenvalue at the cut
    while n < len(spec) and spec.multiplicity[n - 1] > 1 and abs(spec.lambdas[n] - spec.lambdas[n - 1]) < 1e-9 * spec.lambdas[n]:
        n += 1
    spec = spec.truncated(n)
    K = int(math.floor(math.sqrt(spec.lambdas[-1] * (1 + 1e-12)) / math.pi))
    frame = np.array(
        [[inner_product(_template_function(subspace.template, k), spec.eigenfunction(m), subspace.graph)
          for m in range(1, n + 1)] for k in range(1, K + 1)]
    )
    return FullStarModel(spec.lambdas.copy(), coupling_matrix(B, spec, n), frame)
