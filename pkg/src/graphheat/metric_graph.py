"""Compact metric graphs, edge-wise functions and their L2 inner product.

Every edge carries a coordinate running from 0 at its ``start`` vertex to
``length`` at its ``end`` vertex.  A loop has ``start == end``.  Boundary
conditions live on vertices: Dirichlet or Neumann on external vertices
(degree one) and Neumann-Kirchhoff on internal ones.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .errors import (
    DisconnectedGraph,
    GraphSpecError,
    GridMismatch,
    IllegalConditionPlacement,
    NonPositiveLength,
)

DEFAULT_INTERVALS_PER_UNIT = 2048


class Condition(str, enum.Enum):
    DIRICHLET = "D"
    NEUMANN = "N"
    NEUMANN_KIRCHHOFF = "NK"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().upper().replace("-", "").replace("_", "")
        aliases = {
            "D": cls.DIRICHLET,
            "DIRICHLET": cls.DIRICHLET,
            "N": cls.NEUMANN,
            "NEUMANN": cls.NEUMANN,
            "NK": cls.NEUMANN_KIRCHHOFF,
            "NEUMANNKIRCHHOFF": cls.NEUMANN_KIRCHHOFF,
            "KIRCHHOFF": cls.NEUMANN_KIRCHHOFF,
        }
        try:
            return aliases[key]
        except KeyError:
            raise GraphSpecError(f"unknown boundary condition {text!r}") from None


class Kind(str, enum.Enum):
    STAR = "star"
    TADPOLE = "tadpole"
    GENERIC = "generic"


@dataclass(frozen=True)
class Edge:
    id: str
    length: float
    start: str
    end: str

    @property
    def is_loop(self):
        return self.start == self.end


@dataclass(frozen=True)
class Vertex:
    id: str
    condition: Condition


@dataclass(frozen=True)
class MetricGraph:
    """Validated, immutable metric graph.  Build with :func:`build_graph`."""

    edges: tuple[Edge, ...]
    vertices: tuple[Vertex, ...]
    kind: Kind
    _degree: Mapping[str, int] = field(repr=False, compare=False, default_factory=dict)

    def edge(self, edge_id):
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    def vertex(self, vertex_id):
        for v in self.vertices:
            if v.id == vertex_id:
                return v
        raise KeyError(vertex_id)

    def degree(self, vertex_id):
        return self._degree[vertex_id]

    def is_external(self, vertex_id):
        return self._degree[vertex_id] == 1

    @property
    def edge_ids(self):
        return tuple(e.id for e in self.edges)

    @property
    def lengths(self):
        return np.array([e.length for e in self.edges])

    @property
    def total_length(self):
        return float(sum(e.length for e in self.edges))

    @property
    def external_vertices(self):
        return tuple(v for v in self.vertices if self.is_external(v.id))

    @property
    def internal_vertices(self):
        return tuple(v for v in self.vertices if not self.is_external(v.id))

    @property
    def is_pure_neumann(self):
        return all(v.condition != Condition.DIRICHLET for v in self.vertices)

    def to_spec(self):
        return {
            "kind": self.kind.value,
            "edges": [
                {"id": e.id, "length": e.length, "from": e.start, "to": e.end}
                for e in self.edges
            ],
            "vertices": [{"id": v.id, "condition": v.condition.value} for v in self.vertices],
        }


def _infer_kind(edges, degree):
    internal = [v for v, d in degree.items() if d > 1]
    loops = [e for e in edges if e.is_loop]
    if len(internal) == 1 and not loops and len(edges) >= 2:
        c = internal[0]
        if all(e.end == c and degree[e.start] == 1 for e in edges):
            return Kind.STAR
    if len(edges) == 2 and len(loops) == 1 and len(internal) == 1:
        loop = loops[0]
        tail = next(e for e in edges if not e.is_loop)
        if tail.end == loop.start and degree[tail.start] == 1:
            return Kind.TADPOLE
    return Kind.GENERIC


def build_graph(spec):
    """Validate a structured description and return a :class:`MetricGraph`.

    ``spec`` is a mapping with ``edges`` (``id``, ``length``, ``from``, ``to``),
    ``vertices`` (``id``, ``condition``) and an optional ``kind``.  When the
    kind is omitted it is inferred; star and tadpole kinds additionally require
    the canonical orientation (tails run from the external vertex inward).
    """
    if not isinstance(spec, Mapping):
        raise GraphSpecError("graph spec must be a mapping")
    raw_edges = spec.get("edges")
    raw_vertices = spec.get("vertices")
    if not raw_edges:
        raise GraphSpecError("field 'edges': at least one edge is required")
    if not raw_vertices:
        raise GraphSpecError("field 'vertices': at least one vertex is required")

    vertices = []
    seen = set()
    for i, rv in enumerate(raw_vertices):
        try:
            vid = str(rv["id"])
            cond = Condition.parse(rv["condition"])
        except (KeyError, TypeError):
            raise GraphSpecError(f"field 'vertices[{i}]': needs 'id' and 'condition'") from None
        if vid in seen:
            raise GraphSpecError(f"field 'vertices[{i}]': duplicate vertex id {vid!r}")
        seen.add(vid)
        vertices.append(Vertex(vid, cond))

    edges = []
    edge_seen = set()
    for i, re_ in enumerate(raw_edges):
        try:
            eid = str(re_["id"])
            start, end = str(re_["from"]), str(re_["to"])
            length = float(re_["length"])
        except (KeyError, TypeError, ValueError):
            raise GraphSpecError(
                f"field 'edges[{i}]': needs 'id', numeric 'length', 'from', 'to'"
            ) from None
        if eid in edge_seen:
            raise GraphSpecError(f"field 'edges[{i}]': duplicate edge id {eid!r}")
        edge_seen.add(eid)
        if not (math.isfinite(length) and length > 0):
            raise NonPositiveLength(f"edge {eid!r} has length {length}")
        for v in (start, end):
            if v not in seen:
                raise GraphSpecError(f"field 'edges[{i}]': unknown vertex {v!r}")
        edges.append(Edge(eid, length, start, end))

    degree = defaultdict(int)
    for v in vertices:
        degree[v.id] = 0
    for e in edges:
        degree[e.start] += 1
        degree[e.end] += 1

    # connectivity by union-find over edge endpoints
    parent = {v.id: v.id for v in vertices}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in edges:
        parent[find(e.start)] = find(e.end)
    if len({find(v.id) for v in vertices}) != 1:
        raise DisconnectedGraph("graph has more than one connected component")

    for v in vertices:
        d = degree[v.id]
        if d == 1 and v.condition == Condition.NEUMANN_KIRCHHOFF:
            raise IllegalConditionPlacement(f"vertex {v.id!r} is external but marked NK")
        if d > 1 and v.condition != Condition.NEUMANN_KIRCHHOFF:
            raise IllegalConditionPlacement(
                f"vertex {v.id!r} is internal (degree {d}) but marked {v.condition.value}"
            )

    inferred = _infer_kind(edges, degree)
    requested = spec.get("kind")
    if requested is None:
        kind = inferred
    else:
        try:
            kind = Kind(str(requested).lower())
        except ValueError:
            raise GraphSpecError(f"field 'kind': unknown kind {requested!r}") from None
        if kind != Kind.GENERIC and kind != inferred:
            raise GraphSpecError(
                f"field 'kind': declared {kind.value!r} but topology/orientation is {inferred.value!r}"
            )
    return MetricGraph(tuple(edges), tuple(vertices), kind, dict(degree))


def load_graph(path):
    """Read a YAML (or JSON) graph spec file.  Errors carry the file position."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise GraphSpecError(f"{path}: cannot parse{where}: {exc}") from None
    try:
        return build_graph(data)
    except GraphSpecError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def star_graph(lengths, tip_condition="N"):
    """Star with edges ``e1..eN`` running from tip ``t_l`` (x=0) to centre ``c``."""
    edges = [
        {"id": f"e{i + 1}", "length": float(L), "from": f"t{i + 1}", "to": "c"}
        for i, L in enumerate(lengths)
    ]
    vertices = [{"id": f"t{i + 1}", "condition": tip_condition} for i in range(len(lengths))]
    vertices.append({"id": "c", "condition": "NK"})
    return build_graph({"kind": "star", "edges": edges, "vertices": vertices})


def tadpole_graph(loop_length, tail_length):
    """Tadpole: loop ``e1`` closed at ``v``, tail ``e2`` from tip ``w`` (x=0) to ``v``."""
    return build_graph(
        {
            "kind": "tadpole",
            "edges": [
                {"id": "e1", "length": float(loop_length), "from": "v", "to": "v"},
                {"id": "e2", "length": float(tail_length), "from": "w", "to": "v"},
            ],
            "vertices": [
                {"id": "v", "condition": "NK"},
                {"id": "w", "condition": "N"},
            ],
        }
    )


def interval_graph(length=1.0, left="N", right="N"):
    return build_graph(
        {
            "edges": [{"id": "e1", "length": float(length), "from": "a", "to": "b"}],
            "vertices": [{"id": "a", "condition": left}, {"id": "b", "condition": right}],
        }
    )


# ---------------------------------------------------------------------------
# quadrature


def intervals_for(length, per_unit=DEFAULT_INTERVALS_PER_UNIT):
    """Even number of Simpson intervals for an edge of the given length."""
    n = max(2, int(math.ceil(length * per_unit)))
    return n + (n % 2)


def simpson_weights(n_intervals, length):
    if n_intervals < 2 or n_intervals % 2:
        raise GridMismatch(f"Simpson needs an even number of intervals, got {n_intervals}")
    h = length / n_intervals
    w = np.full(n_intervals + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


def edge_grid(length, per_unit=DEFAULT_INTERVALS_PER_UNIT):
    n = intervals_for(length, per_unit)
    return np.linspace(0.0, length, n + 1), simpson_weights(n, length)


# ---------------------------------------------------------------------------
# edge-wise functions


@dataclass(frozen=True)
class ClosedForm:
    """``amplitude * shape(x)`` with shape one of constant, cosine, sine, monomial.

    cosine: ``cos(frequency * (x - shift))``; sine likewise; monomial: ``x**power``.
    """

    tag: str
    amplitude: float = 1.0
    frequency: float = 0.0
    shift: float = 0.0
    power: int = 0

    def __post_init__(self):
        if self.tag not in ("constant", "cosine", "sine", "monomial"):
            raise ValueError(f"unknown closed-form tag {self.tag!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a = self.amplitude
        if self.tag == "constant":
            return np.full_like(x, a)
        if self.tag == "cosine":
            return a * np.cos(self.frequency * (x - self.shift))
        if self.tag == "sine":
            return a * np.sin(self.frequency * (x - self.shift))
        return a * x**self.power

    def scaled(self, c):
        return ClosedForm(self.tag, c * self.amplitude, self.frequency, self.shift, self.power)

    # A*cos(w x + theta) form, for constant/cosine/sine only
    def _harmonic(self):
        if self.tag == "constant":
            return self.amplitude, 0.0, 0.0
        if self.tag == "cosine":
            return self.amplitude, self.frequency, -self.frequency * self.shift
        if self.tag == "sine":
            return self.amplitude, self.frequency, -self.frequency * self.shift - math.pi / 2
        raise TypeError("monomial has no harmonic form")

    @property
    def is_harmonic(self):
        return self.tag != "monomial"

    @property
    def is_polynomial(self):
        return self.tag in ("monomial", "constant")


@dataclass(frozen=True, eq=False)
class Sampled:
    """Values on the uniform grid ``linspace(0, L, len(values))``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise GridMismatch("sampled edge function needs at least 2 samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_intervals(self):
        return self.values.size - 1


EdgeFunction = ClosedForm | Sampled


@dataclass(frozen=True)
class GraphFunction:
    """A function on the graph, one piece per edge; absent edges are zero."""

    pieces: Mapping[str, EdgeFunction]

    @classmethod
    def zero(cls):
        return cls({})

    @classmethod
    def constant(cls, graph, value):
        return cls({e.id: ClosedForm("constant", float(value)) for e in graph.edges})

    @classmethod
    def from_callables(cls, graph, funcs, per_unit=DEFAULT_INTERVALS_PER_UNIT):
        pieces = {}
        for e in graph.edges:
            if e.id in funcs:
                x, _ = edge_grid(e.length, per_unit)
                pieces[e.id] = Sampled(np.asarray(funcs[e.id](x), dtype=float) * np.ones_like(x))
        return cls(pieces)

    def evaluate(self, graph, edge_id, x):
        x = np.asarray(x, dtype=float)
        piece = self.pieces.get(edge_id)
        if piece is None:
            return np.zeros_like(x)
        if isinstance(piece, ClosedForm):
            return piece(x)
        L = graph.edge(edge_id).length
        grid = np.linspace(0.0, L, piece.values.size)
        return np.interp(x, grid, piece.values)

    def samples(self, graph, edge_id, n_intervals):
        L = graph.edge(edge_id).length
        piece = self.pieces.get(edge_id)
        if isinstance(piece, Sampled) and piece.n_intervals != n_intervals:
            raise GridMismatch(
                f"edge {edge_id!r}: sampled on {piece.n_intervals} intervals, requested {n_intervals}"
            )
        if isinstance(piece, Sampled):
            return piece.values
        return self.evaluate(graph, edge_id, np.linspace(0.0, L, n_intervals + 1))

    def scaled(self, c):
        pieces = {}
        for k, p in self.pieces.items():
            pieces[k] = p.scaled(c) if isinstance(p, ClosedForm) else Sampled(c * p.values)
        return GraphFunction(pieces)


def _harmonic_integral(nu, phi, L):
    # integral of cos(nu x + phi) over [0, L], stable as nu -> 0
    half = 0.5 * nu * L
    return L * math.cos(phi + half) * np.sinc(half / math.pi)


def exact_edge_product(f, g, L):
    """Exact integral of ``f*g`` over ``[0, L]``, or ``None`` if no closed form applies."""
    if f.is_polynomial and g.is_polynomial:
        p = f.power + g.power
        return f.amplitude * g.amplitude * L ** (p + 1) / (p + 1)
    if f.is_harmonic and g.is_harmonic:
        a1, w1, t1 = f._harmonic()
        a2, w2, t2 = g._harmonic()
        return 0.5 * a1 * a2 * (
            _harmonic_integral(w1 - w2, t1 - t2, L) + _harmonic_integral(w1 + w2, t1 + t2, L)
        )
    return None


def _edge_inner(f, g, L, per_unit):
    if f is None or g is None:
        return 0.0
    if isinstance(f, ClosedForm) and isinstance(g, ClosedForm):
        exact = exact_edge_product(f, g, L)
        if exact is not None:
            return float(exact)
    if isinstance(f, Sampled) and isinstance(g, Sampled) and f.n_intervals != g.n_intervals:
        raise GridMismatch(f"grids with {f.n_intervals} and {g.n_intervals} intervals")
    if isinstance(f, Sampled):
        n = f.n_intervals
    elif isinstance(g, Sampled):
        n = g.n_intervals
    else:
        n = intervals_for(L, per_unit)
    if n % 2:
        raise GridMismatch(f"sampled grid has an odd number of intervals ({n})")
    x = np.linspace(0.0, L, n + 1)
    fv = f.values if isinstance(f, Sampled) else f(x)
    gv = g.values if isinstance(g, Sampled) else g(x)
    return float(np.dot(simpson_weights(n, L), fv * gv))


def inner_product(f, g, graph, per_unit=DEFAULT_INTERVALS_PER_UNIT):
    """``sum_j int_0^{L_j} f^j g^j dx`` with exact integrals where both pieces allow it."""
    total = 0.0
    for e in graph.edges:
        total += _edge_inner(f.pieces.get(e.id), g.pieces.get(e.id), e.length, per_unit)
    return total


def norm(f, graph, per_unit=DEFAULT_INTERVALS_PER_UNIT):
    return math.sqrt(max(inner_product(f, f, graph, per_unit), 0.0))
