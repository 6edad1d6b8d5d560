"""Metric graphs: construction, points, geodesic distance and geodesic paths.

A metric graph is a finite connected oriented graph whose edges are
identified with intervals ``[0, length]``; coordinate 0 sits at the
initial vertex and coordinate ``length`` at the terminal vertex.

Vertex and edge "ids" are ordered by declaration order. That order is used
for every tie-break (canonical vertex points, Dijkstra ties, parallel edges).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DisconnectedGraph,
    DuplicateEdgeId,
    GraphError,
    NonPositiveLength,
    ParameterOutOfRange,
    PointNotOnGraph,
    SelfLoop,
)

__all__ = [
    "Edge",
    "GraphPoint",
    "GeodesicPath",
    "MetricGraph",
    "build_graph",
    "load_graph",
    "distance",
    "geodesic",
    "interpolate",
    "point_distance_matrix",
]

# relative slack used when comparing path lengths for tie-breaking
_TIE = 1e-12


@dataclass(frozen=True)
class Edge:
    id: str
    init: str
    term: str
    length: float


@dataclass(frozen=True)
class GraphPoint:
    """A location ``s`` in ``[0, length]`` on edge ``edge``.

    Build points through :meth:`MetricGraph.point` so that points sitting on
    a vertex get the canonical representation and compare equal.
    """

    edge: str
    s: float


@dataclass(frozen=True)
class GeodesicPath:
    start: GraphPoint
    end: GraphPoint
    vertices: tuple
    length: float
    # (edge id, s_from, s_to) for each traversed piece, in order
    legs: tuple


class MetricGraph:
    """Immutable metric graph.

    Parameters
    ----------
    vertices : sequence of str
    edges : sequence of Edge
    """

    def __init__(self, vertices, edges):
        self.vertices = tuple(str(v) for v in vertices)
        self.edges = tuple(edges)
        self._validate()
        self.vertex_index = {v: i for i, v in enumerate(self.vertices)}
        self.edge_index = {e.id: i for i, e in enumerate(self.edges)}
        self.lengths = np.array([e.length for e in self.edges], dtype=float)
        self.init_idx = np.array([self.vertex_index[e.init] for e in self.edges], dtype=int)
        self.term_idx = np.array([self.vertex_index[e.term] for e in self.edges], dtype=int)
        incident = {v: [] for v in self.vertices}
        for e in self.edges:
            incident[e.init].append((e.id, +1))
            incident[e.term].append((e.id, -1))
        # vertex -> ((edge id, iota), ...) in edge declaration order
        self.incidence = {v: tuple(incident[v]) for v in self.vertices}
        self._check_connected()

    def _validate(self):
        if not self.vertices:
            raise GraphError("graph needs at least one vertex")
        if len(set(self.vertices)) != len(self.vertices):
            raise GraphError("duplicate vertex id")
        if not self.edges:
            raise GraphError("graph needs at least one edge")
        known = set(self.vertices)
        seen = set()
        for e in self.edges:
            if e.id in seen:
                raise DuplicateEdgeId(f"edge id {e.id!r} used twice")
            seen.add(e.id)
            if e.init not in known or e.term not in known:
                raise GraphError(f"edge {e.id!r} references an unknown vertex")
            if e.init == e.term:
                raise SelfLoop(f"edge {e.id!r} is a self-loop at {e.init!r}")
            if not (e.length > 0 and math.isfinite(e.length)):
                raise NonPositiveLength(f"edge {e.id!r} has length {e.length!r}")

    def _check_connected(self):
        adj = {v: set() for v in self.vertices}
        for e in self.edges:
            adj[e.init].add(e.term)
            adj[e.term].add(e.init)
        stack = [self.vertices[0]]
        seen = {self.vertices[0]}
        while stack:
            u = stack.pop()
            for w in adj[u] - seen:
                seen.add(w)
                stack.append(w)
        if len(seen) != len(self.vertices):
            missing = sorted(set(self.vertices) - seen)
            raise DisconnectedGraph(f"vertices {missing} unreachable from {self.vertices[0]!r}")

    # ------------------------------------------------------------------ I/O

    @classmethod
    def from_dict(cls, spec):
        try:
            vertices = list(spec["vertices"])
            edges = [
                Edge(str(e["id"]), str(e["init"]), str(e["term"]), float(e["length"]))
                for e in spec["edges"]
            ]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph description: {exc}") from exc
        return cls(vertices, edges)

    def to_dict(self):
        return {
            "vertices": list(self.vertices),
            "edges": [
                {"id": e.id, "init": e.init, "term": e.term, "length": e.length}
                for e in self.edges
            ],
        }

    def __repr__(self):
        return f"MetricGraph({len(self.vertices)} vertices, {len(self.edges)} edges)"

    @property
    def total_length(self):
        return float(self.lengths.sum())

    def edge(self, edge_id):
        try:
            return self.edges[self.edge_index[edge_id]]
        except KeyError:
            raise PointNotOnGraph(f"unknown edge {edge_id!r}") from None

    def iota(self, edge_id, vertex):
        """Signed incidence: +1 at the initial vertex, -1 at the terminal one."""
        e = self.edge(edge_id)
        if vertex == e.init:
            return 1
        if vertex == e.term:
            return -1
        return 0

    # ------------------------------------------------------------ points

    def point(self, edge_id, s):
        """Validated, canonical point at coordinate ``s`` on ``edge_id``."""
        e = self.edge(edge_id)
        s = float(s)
        if not (0.0 <= s <= e.length):
            raise PointNotOnGraph(f"s={s} outside [0, {e.length}] on edge {edge_id!r}")
        if s == 0.0:
            return self.vertex_point(e.init)
        if s == e.length:
            return self.vertex_point(e.term)
        return GraphPoint(e.id, s)

    def vertex_point(self, v):
        if v not in self.vertex_index:
            raise PointNotOnGraph(f"unknown vertex {v!r}")
        edge_id, sign = self.incidence[v][0]
        return GraphPoint(edge_id, 0.0 if sign > 0 else self.edge(edge_id).length)

    def vertex_at(self, p):
        """Vertex id if ``p`` sits on a vertex, else ``None``."""
        e = self.edge(p.edge)
        if p.s == 0.0:
            return e.init
        if p.s == e.length:
            return e.term
        return None

    def check_point(self, p):
        e = self.edge(p.edge)
        if not (0.0 <= p.s <= e.length):
            raise PointNotOnGraph(f"{p} is not on the graph")
        return p

    # ----------------------------------------------------------- distances

    @cached_property
    def _adjacency(self):
        adj = [[] for _ in self.vertices]
        for k, e in enumerate(self.edges):
            a, b = self.init_idx[k], self.term_idx[k]
            adj[a].append((b, e.length, k))
            adj[b].append((a, e.length, k))
        for lst in adj:
            lst.sort(key=lambda t: (t[0], t[1], t[2]))
        return adj

    def _dijkstra(self, src):
        dist = np.full(len(self.vertices), np.inf)
        dist[src] = 0.0
        heap = [(0.0, src)]
        done = np.zeros(len(self.vertices), dtype=bool)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for w, length, _ in self._adjacency[u]:
                nd = d + length
                if nd < dist[w]:
                    dist[w] = nd
                    heapq.heappush(heap, (nd, w))
        return dist

    @cached_property
    def vertex_distances(self):
        """All-pairs shortest-path matrix between vertices."""
        return np.vstack([self._dijkstra(i) for i in range(len(self.vertices))])

    def _vertex_route(self, a, b):
        """Lexicographically smallest shortest vertex-index route from a to b.

        Returns ``(vertices, edges)`` where ``edges[i]`` joins ``vertices[i]``
        and ``vertices[i + 1]``.
        """
        D = self.vertex_distances
        route, used = [a], []
        u = a
        while u != b:
            target = D[u, b]
            for w, length, k in self._adjacency[u]:
                if abs(length + D[w, b] - target) <= _TIE * (1.0 + target):
                    # adjacency is sorted by (neighbour, length, edge), so the
                    # first hit is the smallest neighbour via its shortest edge
                    route.append(w)
                    used.append(k)
                    u = w
                    break
            else:  # pragma: no cover - impossible on a connected graph
                raise GraphError("shortest-path reconstruction failed")
        return route, used

    def _endpoints(self, p):
        """(vertex index, offset from p, coordinate of that vertex on p.edge)."""
        k = self.edge_index[p.edge]
        length = self.lengths[k]
        return ((self.init_idx[k], p.s, 0.0), (self.term_idx[k], length - p.s, length))


def build_graph(spec):
    """Build a validated :class:`MetricGraph` from a JSON-like dict."""
    if isinstance(spec, MetricGraph):
        return spec
    return MetricGraph.from_dict(spec)


def load_graph(path):
    return build_graph(json.loads(Path(path).read_text()))


def distance(g, x, y):
    """Geodesic distance between two points of ``g``."""
    g.check_point(x)
    g.check_point(y)
    D = g.vertex_distances
    best = math.inf
    if x.edge == y.edge:
        best = abs(x.s - y.s)
    for a, da, _ in g._endpoints(x):
        for b, db, _ in g._endpoints(y):
            best = min(best, da + D[a, b] + db)
    return float(best)


def geodesic(g, x, y):
    """A shortest path from ``x`` to ``y``.

    Among equally short paths the one with the lexicographically smallest
    sequence of vertex indices wins; a path inside a single edge has the
    empty sequence and therefore wins every tie.
    """
    g.check_point(x)
    g.check_point(y)
    x = g.point(x.edge, x.s)
    y = g.point(y.edge, y.s)
    D = g.vertex_distances
    candidates = []
    if x.edge == y.edge:
        candidates.append((abs(x.s - y.s), (), None))
    for a, da, sa in g._endpoints(x):
        for b, db, sb in g._endpoints(y):
            candidates.append((da + D[a, b] + db, None, (a, sa, b, sb)))
    shortest = min(c[0] for c in candidates)
    slack = _TIE * (1.0 + shortest)
    options = []
    for total, seq, ends in candidates:
        if total > shortest + slack:
            continue
        if ends is None:
            options.append(((), total, ((x.edge, x.s, y.s),)))
            continue
        a, sa, b, sb = ends
        route, used = g._vertex_route(a, b)
        legs = []
        if sa != x.s:
            legs.append((x.edge, float(x.s), float(sa)))
        for i, k in enumerate(used):
            e = g.edges[k]
            if g.init_idx[k] == route[i]:
                legs.append((e.id, 0.0, e.length))
            else:
                legs.append((e.id, e.length, 0.0))
        if sb != y.s:
            legs.append((y.edge, float(sb), float(y.s)))
        options.append((tuple(route), total, tuple(legs)))
    route, total, legs = min(options, key=lambda o: o[0])
    names = tuple(g.vertices[i] for i in route)
    return GeodesicPath(start=x, end=y, vertices=names, length=float(total), legs=legs)


def _locate(path, t):
    """Raw ``(edge, s)`` at parameter t, staying on the leg being travelled."""
    if not (0.0 <= t <= 1.0):
        raise ParameterOutOfRange(f"t={t} outside [0, 1]")
    if not path.legs:
        return path.start.edge, path.start.s
    remaining = t * path.length
    for edge, s0, s1 in path.legs:
        span = abs(s1 - s0)
        if remaining <= span:
            step = remaining if s1 >= s0 else -remaining
            return edge, s0 + step
        remaining -= span
    edge, _, s1 = path.legs[-1]
    return edge, s1


def interpolate(path, t, graph=None):
    """Point at arc length ``t * path.length`` along ``path``.

    Pass ``graph`` to get the canonical representation of points that land
    on a vertex.
    """
    if t == 0.0:
        return path.start
    if t == 1.0:
        return path.end
    edge, s = _locate(path, t)
    if graph is not None:
        e = graph.edge(edge)
        return graph.point(edge, min(max(s, 0.0), e.length))
    return GraphPoint(edge, s)


def point_distance_matrix(g, edges_a, s_a, edges_b, s_b):
    """Vectorised distance matrix between two point clouds.

    ``edges_*`` are integer edge indices, ``s_*`` coordinates on those edges.
    """
    edges_a = np.asarray(edges_a, dtype=int)
    edges_b = np.asarray(edges_b, dtype=int)
    s_a = np.asarray(s_a, dtype=float)
    s_b = np.asarray(s_b, dtype=float)
    D = g.vertex_distances
    L = g.lengths
    ends_a = ((g.init_idx[edges_a], s_a), (g.term_idx[edges_a], L[edges_a] - s_a))
    ends_b = ((g.init_idx[edges_b], s_b), (g.term_idx[edges_b], L[edges_b] - s_b))
    out = np.full((len(s_a), len(s_b)), np.inf)
    for va, da in ends_a:
        for vb, db in ends_b:
            np.minimum(out, da[:, None] + D[np.ix_(va, vb)] + db[None, :], out=out)
    same = edges_a[:, None] == edges_b[None, :]
    direct = np.abs(s_a[:, None] - s_b[None, :])
    np.minimum(out, np.where(same, direct, np.inf), out=out)
    return out
