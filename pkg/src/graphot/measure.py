"""Discretised measures on a metric graph and the free-energy functionals.

Every edge is cut into equal cells. A :class:`GridMeasure` carries one mass
per cell (read as a constant density on the cell) plus optional atoms on
vertices. Functions are piecewise linear between cell centres and vertex
values (:class:`NodalFunction`).

Flat array conventions used throughout the package:

* cells are numbered edge by edge in declaration order, ``N`` in total;
* every edge with ``n`` cells owns ``n + 1`` faces (interfaces); face 0 of an
  edge sits at its initial vertex and face ``n`` at its terminal vertex;
* "support points" are the cell centres followed by the vertices.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import AsymmetricKernel, ConfigInvalid, NotProbability, PointNotOnGraph
from .graph import point_distance_matrix

__all__ = [
    "Grid",
    "GridMeasure",
    "IntervalDensity",
    "NodalFunction",
    "Potential",
    "lebesgue",
    "entropy",
    "relative_entropy",
    "potential_energy",
    "interaction_energy",
    "free_energy",
    "gibbs",
    "PROB_TOL",
]

# tolerance on total mass for "is a probability measure"
PROB_TOL = 1e-9


class Grid:
    """Uniform cells on every edge of a metric graph.

    Parameters
    ----------
    graph : MetricGraph
    cells : dict edge id -> int, or sequence in edge order
    """

    def __init__(self, graph, cells):
        self.graph = graph
        if isinstance(cells, dict):
            counts = [int(cells[e.id]) for e in graph.edges]
        else:
            counts = [int(n) for n in cells]
        if len(counts) != len(graph.edges) or min(counts) < 1:
            raise ValueError("need a positive cell count for every edge")
        self.counts = np.array(counts, dtype=int)
        self.cell_offsets = np.concatenate([[0], np.cumsum(self.counts)])
        self.face_offsets = np.concatenate([[0], np.cumsum(self.counts + 1)])
        self.n_cells = int(self.cell_offsets[-1])
        self.n_faces = int(self.face_offsets[-1])
        self.n_vertices = len(graph.vertices)
        self.edge_h = graph.lengths / self.counts

        self.cell_edge = np.repeat(np.arange(len(counts)), self.counts)
        local = np.arange(self.n_cells) - self.cell_offsets[self.cell_edge]
        self.widths = self.edge_h[self.cell_edge]
        self.centers = (local + 0.5) * self.widths
        self.cell_lo = local * self.widths

        self.face_edge = np.repeat(np.arange(len(counts)), self.counts + 1)
        flocal = np.arange(self.n_faces) - self.face_offsets[self.face_edge]
        self.face_local = flocal
        self.face_s = flocal * self.edge_h[self.face_edge]
        at_init = flocal == 0
        at_term = flocal == self.counts[self.face_edge]
        self.face_vertex = np.full(self.n_faces, -1, dtype=int)
        self.face_vertex[at_init] = graph.init_idx[self.face_edge[at_init]]
        self.face_vertex[at_term] = graph.term_idx[self.face_edge[at_term]]
        self.face_iota = np.zeros(self.n_faces, dtype=int)
        self.face_iota[at_init] = 1
        self.face_iota[at_term] = -1
        self.face_weight = self.edge_h[self.face_edge].copy()
        self.face_weight[self.face_vertex >= 0] *= 0.5

    @classmethod
    def from_width(cls, graph, h):
        """Cells of width at most ``h``; exact when ``h`` divides an edge."""
        if not h > 0:
            raise ValueError("cell width must be positive")
        counts = []
        for length in graph.lengths:
            ratio = length / h
            n = round(ratio)
            if abs(ratio - n) > 1e-9 * max(1.0, ratio):
                n = math.ceil(ratio)
            counts.append(max(1, int(n)))
        return cls(graph, counts)

    def __repr__(self):
        return f"Grid({self.n_cells} cells on {len(self.counts)} edges)"

    def same_as(self, other):
        return other is self or (
            other.graph is self.graph and np.array_equal(other.counts, self.counts)
        )

    @property
    def h_max(self):
        return float(self.edge_h.max())

    @property
    def h_min(self):
        return float(self.edge_h.min())

    def cells_of(self, edge_id):
        k = self.graph.edge_index[edge_id]
        return slice(self.cell_offsets[k], self.cell_offsets[k + 1])

    def faces_of(self, edge_id):
        k = self.graph.edge_index[edge_id]
        return slice(self.face_offsets[k], self.face_offsets[k + 1])

    def cell_at(self, edge_idx, s):
        """Index of the cell containing coordinate ``s`` of edge ``edge_idx``."""
        n = self.counts[edge_idx]
        j = int(np.clip(np.floor(s / self.edge_h[edge_idx]), 0, n - 1))
        return int(self.cell_offsets[edge_idx] + j)

    # ------------------------------------------------- discrete operators

    @cached_property
    def divergence(self):
        """Sparse N x F matrix, ``(D U)_i = U_right(i) - U_left(i)``."""
        rows = np.arange(self.n_cells)
        left = self.face_offsets[self.cell_edge] + (rows - self.cell_offsets[self.cell_edge])
        data = np.concatenate([-np.ones(self.n_cells), np.ones(self.n_cells)])
        return sp.csr_matrix(
            (data, (np.concatenate([rows, rows]), np.concatenate([left, left + 1]))),
            shape=(self.n_cells, self.n_faces),
        )

    @cached_property
    def kirchhoff(self):
        """Sparse V x F matrix of the vertex balance ``sum_e iota_ew U(w_e)``."""
        mask = self.face_vertex >= 0
        faces = np.nonzero(mask)[0]
        return sp.csr_matrix(
            (self.face_iota[mask].astype(float), (self.face_vertex[mask], faces)),
            shape=(self.n_vertices, self.n_faces),
        )

    @cached_property
    def boundary_cells(self):
        """vertex index -> array of cell indices touching that vertex."""
        out = {i: [] for i in range(self.n_vertices)}
        for k in range(len(self.counts)):
            out[self.graph.init_idx[k]].append(self.cell_offsets[k])
            out[self.graph.term_idx[k]].append(self.cell_offsets[k + 1] - 1)
        return {i: np.array(v, dtype=int) for i, v in out.items()}

    @cached_property
    def face_average(self):
        """Sparse F x N map from cell densities to face densities.

        Interior faces average their two cells; every face at a vertex gets
        the mean over all boundary cells incident to that vertex.
        """
        rows, cols, vals = [], [], []
        for f in range(self.n_faces):
            v = self.face_vertex[f]
            if v < 0:
                k = self.face_edge[f]
                c = self.cell_offsets[k] + self.face_local[f]
                rows += [f, f]
                cols += [c - 1, c]
                vals += [0.5, 0.5]
            else:
                cells = self.boundary_cells[v]
                rows += [f] * len(cells)
                cols += list(cells)
                vals += [1.0 / len(cells)] * len(cells)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_faces, self.n_cells))

    @cached_property
    def face_gradient(self):
        """Sparse F x (N + V) difference quotient of nodal values.

        Nodal values are cell-centre values followed by vertex values; the
        result is the slope along the edge orientation at every face.
        """
        rows, cols, vals = [], [], []
        N = self.n_cells
        for f in range(self.n_faces):
            k = self.face_edge[f]
            j = self.face_local[f]
            h = self.edge_h[k]
            c0 = self.cell_offsets[k]
            if j == 0:
                left, right, dx = N + self.graph.init_idx[k], c0, 0.5 * h
            elif j == self.counts[k]:
                left, right, dx = c0 + j - 1, N + self.graph.term_idx[k], 0.5 * h
            else:
                left, right, dx = c0 + j - 1, c0 + j, h
            rows += [f, f]
            cols += [left, right]
            vals += [-1.0 / dx, 1.0 / dx]
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_faces, N + self.n_vertices))

    # --------------------------------------------------- support points

    @cached_property
    def support_edges(self):
        vp = [self.graph.vertex_point(v) for v in self.graph.vertices]
        return np.concatenate(
            [self.cell_edge, [self.graph.edge_index[p.edge] for p in vp]]
        ).astype(int)

    @cached_property
    def support_s(self):
        vp = [self.graph.vertex_point(v) for v in self.graph.vertices]
        return np.concatenate([self.centers, [p.s for p in vp]])

    @cached_property
    def support_distances(self):
        """Geodesic distances between all support points (cells, then vertices)."""
        return point_distance_matrix(
            self.graph, self.support_edges, self.support_s, self.support_edges, self.support_s
        )

    def support_points(self):
        g = self.graph
        pts = [g.point(g.edges[k].id, s) for k, s in zip(self.cell_edge, self.centers)]
        pts += [g.vertex_point(v) for v in g.vertices]
        return pts


class GridMeasure:
    """Cell masses plus vertex atoms on a :class:`Grid`.

    Parameters
    ----------
    grid : Grid
    masses : array (N,)
    atoms : array (V,) or dict vertex -> mass, optional
    check : bool
        Reject negative entries. Iterates of optimisation routines may carry
        round-off negatives and are built with ``check=False``.
    """

    def __init__(self, grid, masses, atoms=None, check=True):
        self.grid = grid
        self.masses = np.asarray(masses, dtype=float).reshape(grid.n_cells)
        if atoms is None:
            self.atoms = np.zeros(grid.n_vertices)
        elif isinstance(atoms, dict):
            self.atoms = np.zeros(grid.n_vertices)
            for v, a in atoms.items():
                self.atoms[grid.graph.vertex_index[v]] = float(a)
        else:
            self.atoms = np.asarray(atoms, dtype=float).reshape(grid.n_vertices)
        if check and (self.masses.min() < 0 or self.atoms.min() < 0):
            raise ValueError("measure has negative entries")
        if not (np.all(np.isfinite(self.masses)) and np.all(np.isfinite(self.atoms))):
            raise ValueError("measure has non-finite entries")

    def __repr__(self):
        return f"GridMeasure(mass={self.total_mass:.6g}, atoms={self.has_atoms})"

    @property
    def total_mass(self):
        return float(self.masses.sum() + self.atoms.sum())

    @property
    def densities(self):
        return self.masses / self.grid.widths

    @property
    def has_atoms(self):
        return bool(np.any(self.atoms > 0))

    @property
    def support_masses(self):
        return np.concatenate([self.masses, self.atoms])

    def is_probability(self, tol=PROB_TOL):
        return abs(self.total_mass - 1.0) <= tol

    def require_probability(self, tol=PROB_TOL):
        if not self.is_probability(tol):
            raise NotProbability(f"total mass {self.total_mass!r} is not 1")

    def normalized(self):
        return GridMeasure(self.grid, self.masses / self.total_mass, self.atoms / self.total_mass)

    def copy_with(self, masses):
        return GridMeasure(self.grid, masses, self.atoms.copy(), check=False)

    def l1_distance(self, other):
        return float(np.abs(self.masses - other.masses).sum() + np.abs(self.atoms - other.atoms).sum())

    @classmethod
    def from_density(cls, grid, density, normalize=True, order=6):
        """Cell averages of ``density(edge_id, s_array)`` by Gauss quadrature."""
        nodes, weights = np.polynomial.legendre.leggauss(order)
        masses = np.zeros(grid.n_cells)
        for e in grid.graph.edges:
            cells = grid.cells_of(e.id)
            lo = grid.cell_lo[cells]
            h = grid.widths[cells]
            s = lo[:, None] + 0.5 * h[:, None] * (nodes[None, :] + 1.0)
            vals = np.asarray(density(e.id, s.ravel()), dtype=float).reshape(s.shape)
            masses[cells] = 0.5 * h * (vals @ weights)
        mu = cls(grid, masses)
        return mu.normalized() if normalize else mu

    @classmethod
    def from_spec(cls, grid, spec):
        """Exact binning of a piecewise-constant density description.

        ``spec = {"edges": {edge: [[a, b, density], ...]}, "atoms": {v: m},
        "normalize": bool}``
        """
        try:
            pieces = IntervalDensity(grid.graph)
            for edge_id, items in spec.get("edges", {}).items():
                for a, b, d in items:
                    pieces.add(edge_id, float(a), float(b), float(d))
            atoms = {str(v): float(m) for v, m in spec.get("atoms", {}).items()}
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigInvalid(f"malformed measure description: {exc}") from exc
        mu = pieces.to_grid(grid)
        mu = cls(grid, mu.masses, atoms)
        return mu.normalized() if spec.get("normalize", False) else mu

    def to_rows(self):
        """(edge id, cell centre, density) rows for CSV output."""
        g = self.grid.graph
        return [
            (g.edges[k].id, float(c), float(d))
            for k, c, d in zip(self.grid.cell_edge, self.grid.centers, self.densities)
        ]


def lebesgue(grid):
    """Length measure: every cell carries its own width."""
    return GridMeasure(grid, grid.widths.copy())


def gibbs(potential):
    """The normalised measure ``exp(-V) / Z`` on the potential's grid."""
    grid = potential.grid
    w = np.exp(-(potential.V - potential.V.min())) * grid.widths
    return GridMeasure(grid, w / w.sum())


class IntervalDensity:
    """Exact piecewise-constant density given by (edge, a, b, density) pieces.

    Overlapping pieces add up. Used for exact push-forwards whose support
    does not line up with any grid.
    """

    def __init__(self, graph):
        self.graph = graph
        self.pieces = {e.id: [] for e in graph.edges}

    def add(self, edge_id, a, b, density):
        e = self.graph.edge(edge_id)
        a, b = (a, b) if a <= b else (b, a)
        if a < -1e-12 or b > e.length + 1e-12:
            raise PointNotOnGraph(f"piece [{a}, {b}] leaves edge {edge_id!r}")
        a, b = max(a, 0.0), min(b, e.length)
        if b > a and density != 0.0:
            self.pieces[edge_id].append((a, b, density))

    @classmethod
    def from_measure(cls, mu):
        if mu.has_atoms:
            raise ValueError("atoms have no density")
        out = cls(mu.grid.graph)
        g = mu.grid
        for k, lo, h, d in zip(g.cell_edge, g.cell_lo, g.widths, mu.densities):
            out.add(g.graph.edges[k].id, lo, lo + h, d)
        return out

    def merged(self, edge_id):
        """Sorted elementary intervals ``(a, b, density)`` of one edge."""
        items = self.pieces[edge_id]
        if not items:
            return []
        cuts = np.unique(np.array([p[0] for p in items] + [p[1] for p in items]))
        dens = np.zeros(len(cuts) - 1)
        for a, b, d in items:
            i0 = np.searchsorted(cuts, a)
            i1 = np.searchsorted(cuts, b)
            dens[i0:i1] += d
        return [(cuts[i], cuts[i + 1], dens[i]) for i in range(len(dens)) if cuts[i + 1] > cuts[i]]

    def total_mass(self):
        return float(sum((b - a) * d for e in self.pieces for a, b, d in self.pieces[e]))

    def entropy(self):
        total = 0.0
        for edge_id in self.pieces:
            for a, b, d in self.merged(edge_id):
                if d > 0:
                    total += (b - a) * d * math.log(d)
                elif d < 0:
                    raise ValueError("negative density")
        return total

    def to_grid(self, grid):
        masses = np.zeros(grid.n_cells)
        for edge_id, items in self.pieces.items():
            k = grid.graph.edge_index[edge_id]
            h = grid.edge_h[k]
            off = grid.cell_offsets[k]
            n = grid.counts[k]
            edges = np.arange(n + 1) * h
            for a, b, d in items:
                lo = np.clip(edges[:-1], a, b)
                hi = np.clip(edges[1:], a, b)
                masses[off:off + n] += d * (hi - lo)
        return GridMeasure(grid, masses, check=False)


class NodalFunction:
    """Continuous function, linear between cell centres and vertex values."""

    def __init__(self, grid, cell_values, vertex_values):
        self.grid = grid
        self.cell_values = np.asarray(cell_values, dtype=float).reshape(grid.n_cells)
        self.vertex_values = np.asarray(vertex_values, dtype=float).reshape(grid.n_vertices)

    @classmethod
    def from_callable(cls, grid, func):
        """Sample ``func(edge_id, s_array)`` at cell centres and vertices."""
        g = grid.graph
        cells = np.empty(grid.n_cells)
        for e in g.edges:
            sl = grid.cells_of(e.id)
            cells[sl] = func(e.id, grid.centers[sl])
        verts = np.empty(grid.n_vertices)
        for i, v in enumerate(g.vertices):
            p = g.vertex_point(v)
            verts[i] = float(np.asarray(func(p.edge, np.array([p.s])))[0])
        return cls(grid, cells, verts)

    @property
    def nodal_values(self):
        return np.concatenate([self.cell_values, self.vertex_values])

    def _nodes(self, edge_idx):
        g = self.grid
        sl = slice(g.cell_offsets[edge_idx], g.cell_offsets[edge_idx + 1])
        length = g.graph.lengths[edge_idx]
        xs = np.concatenate([[0.0], g.centers[sl], [length]])
        ys = np.concatenate(
            [
                [self.vertex_values[g.graph.init_idx[edge_idx]]],
                self.cell_values[sl],
                [self.vertex_values[g.graph.term_idx[edge_idx]]],
            ]
        )
        return xs, ys

    def __call__(self, edge_id, s):
        xs, ys = self._nodes(self.grid.graph.edge_index[edge_id])
        return np.interp(s, xs, ys)

    def breakpoints(self, edge_id):
        return self._nodes(self.grid.graph.edge_index[edge_id])[0]

    def integral(self, edge_id, a, b):
        """Exact integral of the interpolant over ``[a, b]`` on one edge."""
        xs, ys = self._nodes(self.grid.graph.edge_index[edge_id])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])

        def prim(x):
            x = np.clip(np.asarray(x, dtype=float), xs[0], xs[-1])
            i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
            u = x - xs[i]
            slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            return cum[i] + ys[i] * u + 0.5 * slope * u * u

        return prim(b) - prim(a)

    def lipschitz(self):
        """Largest slope of the interpolant (its exact Lipschitz constant)."""
        best = 0.0
        for k in range(len(self.grid.counts)):
            xs, ys = self._nodes(k)
            best = max(best, float(np.max(np.abs(np.diff(ys) / np.diff(xs)))))
        return best


# ------------------------------------------------------------- potentials


def _edge_polynomial(graph, coeffs):
    def V(edge_id, s):
        c = coeffs.get(edge_id, [0.0])
        return np.polynomial.polynomial.polyval(np.asarray(s, dtype=float), c)

    return V


class Potential:
    """Confinement ``V`` and interaction kernel ``W`` sampled on a grid.

    Parameters
    ----------
    grid : Grid
    V : callable ``(edge_id, s_array) -> values``, array of cell values, or None
    W : callable on distances (``W(x, y) = kernel(d(x, y))``), a symmetric
        ``(S, S)`` table over support points, or None
    """

    def __init__(self, grid, V=None, W=None):
        self.grid = grid
        g = grid.graph
        if V is None:
            self.V = np.zeros(grid.n_cells)
            self.V_faces = np.zeros(grid.n_faces)
        elif callable(V):
            self.V = np.empty(grid.n_cells)
            self.V_faces = np.empty(grid.n_faces)
            for e in g.edges:
                self.V[grid.cells_of(e.id)] = V(e.id, grid.centers[grid.cells_of(e.id)])
                self.V_faces[grid.faces_of(e.id)] = V(e.id, grid.face_s[grid.faces_of(e.id)])
        else:
            self.V = np.asarray(V, dtype=float).reshape(grid.n_cells)
            self.V_faces = np.empty(grid.n_faces)
            for e in g.edges:
                vals = self.V[grid.cells_of(e.id)]
                faces = np.concatenate([[vals[0]], 0.5 * (vals[1:] + vals[:-1]), [vals[-1]]])
                self.V_faces[grid.faces_of(e.id)] = faces
        if not (np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.V_faces))):
            raise ValueError("potential V must be finite")

        S = grid.n_cells + grid.n_vertices
        if W is None:
            self.W = None
        elif callable(W):
            self.W = np.asarray(W(grid.support_distances), dtype=float)
        else:
            self.W = np.asarray(W, dtype=float)
        if self.W is not None:
            if self.W.shape != (S, S):
                raise ValueError(f"interaction table must be {S}x{S}")
            if not np.all(np.isfinite(self.W)):
                raise ValueError("interaction kernel must be finite")
            if not np.allclose(self.W, self.W.T, rtol=0.0, atol=1e-12 * (1 + np.abs(self.W).max())):
                raise AsymmetricKernel("interaction kernel is not symmetric")

    @classmethod
    def zero(cls, grid):
        return cls(grid)

    @classmethod
    def from_spec(cls, grid, vspec=None, wspec=None):
        """Build from JSON-style descriptions.

        V kinds: ``zero``; ``edge_polynomial`` with ``coeffs: {edge: [c0, c1,
        ...]}`` in the edge coordinate; ``distance`` with ``scale``,
        ``power`` and ``center: {edge, s}``; ``table`` with per-edge cell
        values. W kinds: ``zero``; ``constant`` with ``value``; ``distance``
        with ``scale`` and ``power``.
        """
        g = grid.graph
        V = None
        if vspec:
            kind = vspec.get("kind", "zero")
            if kind == "zero":
                V = None
            elif kind == "edge_polynomial":
                V = _edge_polynomial(g, {k: list(map(float, c)) for k, c in vspec["coeffs"].items()})
            elif kind == "distance":
                c = vspec["center"]
                x0 = g.point(c["edge"], c["s"])
                scale, power = float(vspec.get("scale", 1.0)), float(vspec.get("power", 2.0))
                k0 = g.edge_index[x0.edge]

                def V(edge_id, s, _k0=k0, _s0=x0.s):
                    s = np.atleast_1d(np.asarray(s, dtype=float))
                    d = point_distance_matrix(
                        g, [_k0], [_s0], np.full(len(s), g.edge_index[edge_id]), s
                    )[0]
                    return scale * d**power

            elif kind == "table":
                V = np.concatenate([np.asarray(vspec["values"][e.id], dtype=float) for e in g.edges])
            else:
                raise ConfigInvalid(f"unknown V kind {kind!r}")
        W = None
        if wspec:
            kind = wspec.get("kind", "zero")
            if kind == "zero":
                W = None
            elif kind == "constant":
                value = float(wspec["value"])
                W = lambda d: np.full_like(d, value)  # noqa: E731
            elif kind == "distance":
                scale, power = float(wspec.get("scale", 1.0)), float(wspec.get("power", 1.0))
                W = lambda d: scale * d**power  # noqa: E731
            else:
                raise ConfigInvalid(f"unknown W kind {kind!r}")
        return cls(grid, V=V, W=W)

    @property
    def has_interaction(self):
        return self.W is not None and np.any(self.W != 0)

    def field(self, mu):
        """``W[mu]`` at all support points (zeros without interaction)."""
        S = self.grid.n_cells + self.grid.n_vertices
        if self.W is None:
            return np.zeros(S)
        return self.W @ mu.support_masses

    def field_faces(self, mu):
        """``W[mu]`` at faces: cell averages inside edges, vertex values at ends."""
        grid = self.grid
        f = self.field(mu)
        out = np.empty(grid.n_faces)
        cells = f[: grid.n_cells]
        verts = f[grid.n_cells:]
        for e in grid.graph.edges:
            sl = grid.faces_of(e.id)
            vals = cells[grid.cells_of(e.id)]
            k = grid.graph.edge_index[e.id]
            out[sl] = np.concatenate(
                [[verts[grid.graph.init_idx[k]]], 0.5 * (vals[1:] + vals[:-1]), [verts[grid.graph.term_idx[k]]]]
            )
        return out

    def vertex_values(self):
        """``V`` at the vertices, read off the end faces (first incident edge wins)."""
        grid = self.grid
        out = np.zeros(grid.n_vertices)
        seen = np.zeros(grid.n_vertices, dtype=bool)
        for f in np.nonzero(grid.face_vertex >= 0)[0]:
            v = grid.face_vertex[f]
            if not seen[v]:
                out[v] = self.V_faces[f]
                seen[v] = True
        return out

    def nodal_values(self):
        """``V`` at cell centres followed by its vertex values."""
        return np.concatenate([self.V, self.vertex_values()])

    @property
    def V_sup(self):
        return float(max(np.abs(self.V).max(), np.abs(self.V_faces).max()))


# ------------------------------------------------------------ functionals


def _check_probability(mu):
    if mu.masses.min() < 0 or mu.atoms.min() < 0:
        raise NotProbability("measure has negative entries")
    mu.require_probability()


def entropy(mu):
    """Boltzmann entropy with respect to length; ``+inf`` with any atom."""
    _check_probability(mu)
    if mu.has_atoms:
        return math.inf
    m = mu.masses
    pos = m > 0
    return float(np.sum(m[pos] * np.log(m[pos] / mu.grid.widths[pos])))


def potential_energy(mu, potential):
    return float(np.dot(potential.V, mu.masses))


def relative_entropy(mu, potential):
    """Entropy relative to ``exp(-V)`` times length."""
    _check_probability(mu)
    if mu.has_atoms:
        return math.inf
    m = mu.masses
    pos = m > 0
    ratio = m[pos] / (mu.grid.widths[pos] * np.exp(-potential.V[pos]))
    return float(np.sum(m[pos] * np.log(ratio)))


def interaction_energy(mu, potential):
    if potential.W is None:
        return 0.0
    q = mu.support_masses
    return float(0.5 * q @ potential.W @ q)


def free_energy(mu, potential):
    """Relative entropy plus interaction energy."""
    ent = relative_entropy(mu, potential)
    if math.isinf(ent):
        return ent
    return ent + interaction_energy(mu, potential)
