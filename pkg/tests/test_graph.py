import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from graphot import (
    DisconnectedGraph,
    DuplicateEdgeId,
    NonPositiveLength,
    PointNotOnGraph,
    SelfLoop,
    build_graph,
    distance,
    geodesic,
    interpolate,
)
from graphot.graph import point_distance_matrix


def _random_graph(rng, n_vertices=5, n_extra=3):
    verts = [f"v{i}" for i in range(n_vertices)]
    edges = []
    for i in range(1, n_vertices):
        j = int(rng.integers(0, i))
        edges.append((verts[j], verts[i], float(rng.uniform(0.3, 2.0))))
    for _ in range(n_extra):
        i, j = rng.choice(n_vertices, size=2, replace=False)
        edges.append((verts[i], verts[j], float(rng.uniform(0.3, 2.0))))
    spec = {
        "vertices": verts,
        "edges": [{"id": f"e{k}", "init": a, "term": b, "length": ell} for k, (a, b, ell) in enumerate(edges)],
    }
    return build_graph(spec)


def _subdivided_oracle(g, pts):
    """Shortest paths on the graph with the query points inserted as nodes (scipy)."""
    names = {v: i for i, v in enumerate(g.vertices)}
    rows, cols, vals = [], [], []
    extra = len(names)
    pid = []
    for e in g.edges:
        on_edge = sorted((p.s, k) for k, p in enumerate(pts) if p.edge == e.id)
        chain = [(0.0, names[e.init])]
        for s, k in on_edge:
            chain.append((s, extra))
            pid.append((k, extra))
            extra += 1
        chain.append((e.length, names[e.term]))
        for (s0, a), (s1, b) in zip(chain[:-1], chain[1:]):
            rows += [a, b]
            cols += [b, a]
            vals += [max(s1 - s0, 1e-300)] * 2
    # parallel edges: keep the shortest (csr sums duplicates, so dedupe first)
    best = {}
    for a, b, w in zip(rows, cols, vals):
        best[(a, b)] = min(best.get((a, b), np.inf), w)
    keys = list(best)
    A = csr_matrix(([best[k] for k in keys], ([k[0] for k in keys], [k[1] for k in keys])), shape=(extra, extra))
    D = shortest_path(A, directed=False)
    node = dict(pid)
    idx = [node[k] for k in range(len(pts))]
    return D[np.ix_(idx, idx)]


@pytest.mark.parametrize("seed", range(5))
def test_distance_matches_subdivided_shortest_paths(seed):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng)
    pts = []
    for _ in range(8):
        e = g.edges[int(rng.integers(len(g.edges)))]
        pts.append(g.point(e.id, float(rng.uniform(0.01, 0.99) * e.length)))
    oracle = _subdivided_oracle(g, pts)
    ours = np.array([[distance(g, x, y) for y in pts] for x in pts])
    np.testing.assert_allclose(ours, oracle, atol=1e-12)
    ek = np.array([g.edge_index[p.edge] for p in pts])
    sk = np.array([p.s for p in pts])
    np.testing.assert_allclose(point_distance_matrix(g, ek, sk, ek, sk), oracle, atol=1e-12)


def test_three_star_distances(star):
    x, y = star.point("e1", 0.2), star.point("e2", 0.7)
    assert distance(star, x, y) == pytest.approx(1.1)
    path = geodesic(star, x, y)
    assert path.length == pytest.approx(1.1)
    assert path.vertices == ("c",)
    mid = interpolate(path, 0.5)
    assert distance(star, x, mid) == pytest.approx(0.55)
    assert distance(star, mid, y) == pytest.approx(0.55)


def test_vertex_points_are_canonical(star):
    assert star.point("e1", 1.0) == star.point("f", 0.0)
    assert distance(star, star.point("e1", 1.0), star.point("f", 0.0)) == 0.0


def test_geodesic_is_constant_speed(star, rng):
    x, y = star.point("e1", 0.1), star.point("f", 0.9)
    path = geodesic(star, x, y)
    ts = np.sort(rng.uniform(0, 1, 6))
    for s, t in zip(ts[:-1], ts[1:]):
        d = distance(star, interpolate(path, s), interpolate(path, t))
        assert d == pytest.approx((t - s) * path.length, abs=1e-12)


def test_roundtrip_dict(star):
    assert build_graph(star.to_dict()).to_dict() == star.to_dict()


@pytest.mark.parametrize(
    "spec, err",
    [
        ({"vertices": ["a", "b", "c"], "edges": [{"id": "x", "init": "a", "term": "b", "length": 1}]}, DisconnectedGraph),
        ({"vertices": ["a", "b"], "edges": [{"id": "x", "init": "a", "term": "b", "length": 0}]}, NonPositiveLength),
        ({"vertices": ["a"], "edges": [{"id": "x", "init": "a", "term": "a", "length": 1}]}, SelfLoop),
        (
            {
                "vertices": ["a", "b"],
                "edges": [
                    {"id": "x", "init": "a", "term": "b", "length": 1},
                    {"id": "x", "init": "b", "term": "a", "length": 2},
                ],
            },
            DuplicateEdgeId,
        ),
    ],
)
def test_invalid_graphs(spec, err):
    with pytest.raises(err):
        build_graph(spec)


def test_point_off_graph(star):
    with pytest.raises(PointNotOnGraph):
        star.point("e1", 1.5)
    with pytest.raises(PointNotOnGraph):
        star.point("nope", 0.5)


def _simple_path_oracle(g, x, y):
    """Shortest route by enumerating every simple vertex path between the edge ends."""
    ex, ey = g.edge(x.edge), g.edge(y.edge)
    if x.edge == y.edge:
        best = abs(x.s - y.s)
    else:
        best = np.inf
    adj = {v: [] for v in g.vertices}
    for e in g.edges:
        adj[e.init].append((e.term, e.length))
        adj[e.term].append((e.init, e.length))

    def walk(v, target, seen, acc, out):
        if v == target:
            out.append(acc)
            return
        for w, ell in adj[v]:
            if w not in seen:
                walk(w, target, seen | {w}, acc + ell, out)

    for a, da in ((ex.init, x.s), (ex.term, ex.length - x.s)):
        for b, db in ((ey.init, y.s), (ey.term, ey.length - y.s)):
            lengths = []
            walk(a, b, {a}, 0.0, lengths)
            best = min(best, da + min(lengths) + db)
    return best


@pytest.mark.parametrize("seed", range(4))
def test_geodesic_matches_path_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    g = _random_graph(rng, n_vertices=4, n_extra=2)
    assert len(g.edges) <= 6
    for _ in range(10):
        e1, e2 = (g.edges[int(i)] for i in rng.integers(len(g.edges), size=2))
        x = g.point(e1.id, float(rng.uniform(0, e1.length)))
        y = g.point(e2.id, float(rng.uniform(0, e2.length)))
        path = geodesic(g, x, y)
        assert path.length == distance(g, x, y)
        assert path.length == pytest.approx(_simple_path_oracle(g, x, y), abs=1e-12)


def test_metric_axioms_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(5):
        g = _random_graph(rng)
        pts = []
        for _ in range(12):
            e = g.edges[int(rng.integers(len(g.edges)))]
            pts.append(g.point(e.id, float(rng.choice([0.0, rng.uniform(0, e.length), e.length]))))
        D = np.array([[distance(g, x, y) for y in pts] for x in pts])
        assert np.all(D >= 0)
        np.testing.assert_allclose(D, D.T, rtol=0, atol=1e-12)
        for i, x in enumerate(pts):
            for j, y in enumerate(pts):
                assert (D[i, j] == 0) == (x == y)
        assert np.all(D[:, None, :] <= D[:, :, None] + D[None, :, :] + 1e-12)
