"""Static optimal transport on a metric graph.

Exact Wasserstein distances between finitely supported measures (the LP is
solved by POT's network simplex and certified here through its duals),
c-transforms, the Hopf-Lax semigroup on grid nodes and displacement
interpolation along geodesics.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeTime, NotProbability, PlanMarginalMismatch, UnbalancedMasses
from .graph import _locate, geodesic, point_distance_matrix
from .measure import PROB_TOL, GridMeasure, IntervalDensity

# POT probes every installed array backend on import; only numpy is needed.
for _backend in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

__all__ = [
    "SupportCloud",
    "TransportPlan",
    "DualPotentials",
    "WassersteinResult",
    "wasserstein",
    "cost_matrix",
    "c_transform",
    "hopf_lax",
    "HopfLaxReport",
    "verify_hopf_lax_properties",
    "displacement_density",
    "geodesic_interpolation",
]


class SupportCloud:
    """Weighted points of a graph.

    Parameters
    ----------
    graph : MetricGraph
    edges : int array, edge index of every point
    s : float array, coordinate on that edge
    masses : float array
    widths : float array, optional
        Width of the cell each point stands for (0 for atoms). Only used by
        displacement interpolation.
    index : int array, optional
        Position of each point among the support points of the grid it came
        from.
    """

    def __init__(self, graph, edges, s, masses, widths=None, index=None):
        self.graph = graph
        self.edges = np.asarray(edges, dtype=int)
        self.s = np.asarray(s, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        n = len(self.masses)
        self.widths = np.zeros(n) if widths is None else np.asarray(widths, dtype=float)
        self.index = np.arange(n) if index is None else np.asarray(index, dtype=int)
        if self.masses.size and self.masses.min() < 0:
            raise NotProbability("negative mass in support cloud")

    def __len__(self):
        return len(self.masses)

    @property
    def total_mass(self):
        return float(self.masses.sum())

    @classmethod
    def from_measure(cls, mu, drop_zero=True):
        """Cell centres and vertex atoms of a grid measure."""
        grid = mu.grid
        q = mu.support_masses
        widths = np.concatenate([grid.widths, np.zeros(grid.n_vertices)])
        keep = np.nonzero(q > 0)[0] if drop_zero else np.arange(len(q))
        return cls(grid.graph, grid.support_edges[keep], grid.support_s[keep], q[keep], widths[keep], keep)

    @classmethod
    def from_points(cls, graph, points, masses):
        edges = [graph.edge_index[p.edge] for p in points]
        return cls(graph, edges, [p.s for p in points], masses)

    def points(self):
        return [self.graph.point(self.graph.edges[k].id, s) for k, s in zip(self.edges, self.s)]


def cost_matrix(x, y, p=2):
    """``d(x_i, y_j) ** p`` for two clouds on the same graph."""
    return point_distance_matrix(x.graph, x.edges, x.s, y.edges, y.s) ** p


@dataclass
class TransportPlan:
    """Sparse coupling between two clouds; ``mass[k]`` moves ``rows[k] -> cols[k]``."""

    source: SupportCloud
    target: SupportCloud
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        self.check_marginals()

    def check_marginals(self, tol=1e-10):
        r = np.bincount(self.rows, self.mass, minlength=len(self.source))
        c = np.bincount(self.cols, self.mass, minlength=len(self.target))
        err = max(np.abs(r - self.source.masses).max(initial=0.0), np.abs(c - self.target.masses).max(initial=0.0))
        if err > tol:
            raise PlanMarginalMismatch(f"plan marginals off by {err:.3g}")
        return err

    def dense(self):
        out = np.zeros((len(self.source), len(self.target)))
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def __len__(self):
        return len(self.mass)


@dataclass
class DualPotentials:
    phi: np.ndarray
    psi: np.ndarray


@dataclass
class WassersteinResult:
    value: float
    cost: float
    p: int
    plan: TransportPlan
    duals: DualPotentials
    duality_gap: float
    dual_infeasibility: float
    slackness: float
    extra: dict = field(default_factory=dict)

    def dual_lipschitz(self):
        """Largest slope of the source potential between source points."""
        x = self.plan.source
        D = point_distance_matrix(x.graph, x.edges, x.s, x.edges, x.s)
        dphi = np.abs(self.duals.phi[:, None] - self.duals.phi[None, :])
        mask = D > 0
        return float((dphi[mask] / D[mask]).max(initial=0.0))


def _as_cloud(m):
    if isinstance(m, GridMeasure):
        return SupportCloud.from_measure(m)
    return m


def wasserstein(g, mu, nu, p=2, max_iter=10_000_000):
    """Exact ``W_p`` between two finitely supported probability measures.

    Parameters
    ----------
    g : MetricGraph
    mu, nu : GridMeasure or SupportCloud
    p : {1, 2}

    Returns
    -------
    WassersteinResult
        ``value`` is ``W_p`` and ``cost`` the optimal LP value ``W_p ** p``.
        The plan and dual potentials are certified: the duality gap, the
        largest dual constraint violation and the largest complementary
        slackness defect on the plan support are reported.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    x, y = _as_cloud(mu), _as_cloud(nu)
    if x.graph is not g or y.graph is not g:
        raise ValueError("measures do not live on the given graph")
    for c in (x, y):
        if abs(c.total_mass - 1.0) > PROB_TOL:
            raise NotProbability(f"total mass {c.total_mass!r} is not 1")
    if abs(x.total_mass - y.total_mass) > PROB_TOL:
        raise UnbalancedMasses("source and target masses differ")
    C = cost_matrix(x, y, p)
    a = x.masses
    b = y.masses * (a.sum() / y.masses.sum())
    G, log = ot.emd(a, b, C, numItermax=max_iter, log=True)
    if log.get("warning"):
        raise RuntimeError(f"network simplex: {log['warning']}")
    u, v = np.asarray(log["u"]), np.asarray(log["v"])
    rows, cols = np.nonzero(G > 0)
    mass = G[rows, cols]
    plan = TransportPlan(x, y, rows, cols, mass)
    primal = float(np.sum(mass * C[rows, cols]))
    dual = float(a @ u + b @ v)
    reduced = u[:, None] + v[None, :] - C
    return WassersteinResult(
        value=max(primal, 0.0) ** (1.0 / p),
        cost=primal,
        p=p,
        plan=plan,
        duals=DualPotentials(u, v),
        duality_gap=abs(primal - dual),
        dual_infeasibility=float(max(reduced.max(), 0.0)),
        slackness=float(np.abs(reduced[rows, cols]).max(initial=0.0)),
    )


def c_transform(x, phi, p=2, y=None):
    """``phi^c(y_j) = min_i d(x_i, y_j)^p - phi_i``; ``y`` defaults to ``x``."""
    y = x if y is None else y
    C = cost_matrix(x, y, p)
    return np.min(C - np.asarray(phi, dtype=float)[:, None], axis=0)


# ------------------------------------------------------------ Hopf-Lax


def hopf_lax(grid, f, t):
    """``Q_t f(x) = min_y f(y) + d(x, y)^2 / (2 t)`` over all grid nodes.

    ``f`` holds one value per support point of ``grid`` (cell centres, then
    vertices).
    """
    f = np.asarray(f, dtype=float)
    if t < 0:
        raise NegativeTime(f"t={t} is negative")
    if t == 0:
        return f.copy()
    D = grid.support_distances
    return np.min(f[None, :] + D**2 / (2 * t), axis=1)


def _neighbour_pairs(grid):
    """(i, j, distance) for nodes joined by a face of the grid."""
    A = grid.face_gradient.tocsr()
    left = np.empty(grid.n_faces, dtype=int)
    right = np.empty(grid.n_faces, dtype=int)
    dx = np.empty(grid.n_faces)
    for f in range(grid.n_faces):
        cols = A.indices[A.indptr[f]:A.indptr[f + 1]]
        vals = A.data[A.indptr[f]:A.indptr[f + 1]]
        left[f] = cols[vals < 0][0]
        right[f] = cols[vals > 0][0]
        dx[f] = 1.0 / vals[vals > 0][0]
    return left, right, dx


def local_slope(grid, q, pairs=None):
    """Largest difference quotient from each node to its grid neighbours."""
    left, right, dx = pairs or _neighbour_pairs(grid)
    slope = np.abs(q[right] - q[left]) / dx
    out = np.zeros(len(q))
    np.maximum.at(out, left, slope)
    np.maximum.at(out, right, slope)
    return out


def lipschitz_constant(grid, q):
    """Largest pair ratio ``|q(x) - q(y)| / d(x, y)`` over distinct nodes."""
    D = grid.support_distances
    mask = D > 0
    diff = np.abs(q[:, None] - q[None, :])
    return float((diff[mask] / D[mask]).max(initial=0.0))


@dataclass
class HopfLaxReport:
    """Outcome of :func:`verify_hopf_lax_properties`, keyed by time."""

    lip_f: float
    lip_ratio: dict
    hj_residual: dict
    hj_forward_residual: dict
    excluded: dict
    tolerance: float
    dt: float

    @property
    def max_lip_ratio(self):
        return max(self.lip_ratio.values(), default=0.0)

    @property
    def max_hj_residual(self):
        return max(self.hj_residual.values(), default=0.0)

    @property
    def max_hj_forward_residual(self):
        return max(self.hj_forward_residual.values(), default=0.0)


def verify_hopf_lax_properties(grid, f, times, dt=None):
    """Lipschitz growth and Hamilton-Jacobi subsolution check for ``Q_t f``.

    For every ``t`` in ``times`` the report holds

    * ``Lip(Q_t f) / Lip(f)``, both from pair ratios over all nodes;
    * the largest positive part of ``dQ/dt + lip(Q_t f)^2 / 2`` with a
      centred time difference of step ``dt`` (default: largest cell width)
      and the local slope over grid neighbours. Nodes where ``t -> Q_t f(x)``
      has a kink inside ``[t - dt, t + dt]`` (forward and backward quotients
      differ by more than the budget) are left out and counted in
      ``excluded``: there the time derivative does not exist;
    * the same quantity with a forward difference, over all nodes.

    ``tolerance`` is the budget ``4 Lip(f)^2 (h + dt)``.
    """
    f = np.asarray(f, dtype=float)
    h = grid.h_max
    dt = h if dt is None else float(dt)
    lip_f = lipschitz_constant(grid, f)
    tol = 4 * lip_f**2 * (h + dt)
    pairs = _neighbour_pairs(grid)
    ratios, centred, forward, excluded = {}, {}, {}, {}
    for t in times:
        if t <= dt:
            raise ValueError("times must exceed the difference step")
        q = hopf_lax(grid, f, t)
        ratios[t] = lipschitz_constant(grid, q) / lip_f if lip_f > 0 else 0.0
        q_next = hopf_lax(grid, f, t + dt)
        q_prev = hopf_lax(grid, f, t - dt)
        fwd = (q_next - q) / dt
        bwd = (q - q_prev) / dt
        half_lip2 = 0.5 * local_slope(grid, q, pairs) ** 2
        regular = np.abs(fwd - bwd) <= tol
        res = 0.5 * (fwd + bwd) + half_lip2
        centred[t] = float(max(res[regular].max(initial=0.0), 0.0))
        forward[t] = float(max((fwd + half_lip2).max(), 0.0))
        excluded[t] = int((~regular).sum())
    return HopfLaxReport(lip_f, ratios, centred, forward, excluded, tol, dt)


# ------------------------------------------------ displacement interpolation


class _PathCursor:
    """Maps arc positions along a geodesic (extended past both ends) to pieces."""

    def __init__(self, g, path):
        self.g = g
        self.length = path.length
        legs = list(path.legs)
        if legs:
            e0, a0, b0 = legs[0]
            self.start_dir = 1.0 if b0 >= a0 else -1.0
            e1, a1, b1 = legs[-1]
            self.end_dir = 1.0 if b1 >= a1 else -1.0
            self.start_edge, self.start_s = e0, a0
            self.end_edge, self.end_s = e1, b1
        else:
            self.start_dir = self.end_dir = 1.0
            self.start_edge, self.start_s = path.start.edge, path.start.s
            self.end_edge, self.end_s = self.start_edge, self.start_s
        self.legs = legs

    def pieces(self, p0, p1):
        """``(edge, s_lo, s_hi, arc_len)`` pieces covering arc range ``[p0, p1]``."""
        out = []
        if p0 < 0:
            a = self.start_s + self.start_dir * min(p1, 0.0)
            b = self.start_s + self.start_dir * p0
            out.append((self.start_edge, a, b))
        pos = 0.0
        for edge, s0, s1 in self.legs:
            span = abs(s1 - s0)
            lo, hi = max(p0, pos), min(p1, pos + span)
            if hi > lo:
                d = 1.0 if s1 >= s0 else -1.0
                out.append((edge, s0 + d * (lo - pos), s0 + d * (hi - pos)))
            pos += span
        if p1 > self.length:
            a = self.end_s + self.end_dir * (max(p0, self.length) - self.length)
            b = self.end_s + self.end_dir * (p1 - self.length)
            out.append((self.end_edge, a, b))
        clipped = []
        for edge, a, b in out:
            a, b = min(a, b), max(a, b)
            L = self.g.edge(edge).length
            a, b = max(a, 0.0), min(b, L)
            if b > a:
                clipped.append((edge, a, b))
        return clipped


def _plan_geodesics(g, plan):
    x, y = plan.source, plan.target
    out = []
    for i, j in zip(plan.rows, plan.cols):
        px = g.point(g.edges[x.edges[i]].id, x.s[i])
        py = g.point(g.edges[y.edges[j]].id, y.s[j])
        out.append(geodesic(g, px, py))
    return out


def _spread(g, x, y, entries, t):
    """Interval density of rigid blocks ``(i, j, mass, path)`` at time ``t``."""
    out = IntervalDensity(g)
    for i, j, m, path in entries:
        w = (1 - t) * x.widths[i] + t * y.widths[j]
        centre = t * path.length
        pieces = _PathCursor(g, path).pieces(centre - w / 2, centre + w / 2)
        covered = sum(b - a for _, a, b in pieces)
        for edge, a, b in pieces:
            out.add(edge, a, b, m / covered)
    return out


def displacement_density(g, plan, t, geodesics=None):
    """Exact density of the displacement interpolation at time ``t``.

    Every plan entry moves its mass as a rigid block along the geodesic
    between the two cell centres; the block width changes linearly from
    the source cell width to the target cell width. Plans touching atoms
    have no density at interior times and are rejected.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    x, y = plan.source, plan.target
    if np.any(x.widths[plan.rows] == 0) or np.any(y.widths[plan.cols] == 0):
        raise ValueError("plan moves atoms; use geodesic_interpolation")
    geodesics = geodesics or _plan_geodesics(g, plan)
    return _spread(g, x, y, zip(plan.rows, plan.cols, plan.mass, geodesics), t)


def geodesic_interpolation(g, mu, nu, plan, t, grid=None, geodesics=None):
    """Displacement interpolation at time ``t``, binned on a grid.

    Cells travel as rigid blocks (see :func:`displacement_density`); atoms
    travel as points and are binned into the cell of the edge they are
    travelling on.
    """
    grid = grid or mu.grid
    x, y = plan.source, plan.target
    mu_q = np.zeros(grid.n_cells + grid.n_vertices)
    nu_q = np.zeros_like(mu_q)
    np.add.at(mu_q, x.index[plan.rows], plan.mass)
    np.add.at(nu_q, y.index[plan.cols], plan.mass)
    if not (
        np.allclose(mu_q, mu.support_masses, rtol=0, atol=1e-10)
        and np.allclose(nu_q, nu.support_masses, rtol=0, atol=1e-10)
    ):
        raise PlanMarginalMismatch("plan does not couple the given measures")
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return GridMeasure(grid, mu.masses, mu.atoms)
    if t == 1.0:
        return GridMeasure(grid, nu.masses, nu.atoms)
    geodesics = geodesics or _plan_geodesics(g, plan)
    spread = (x.widths[plan.rows] > 0) | (y.widths[plan.cols] > 0)
    blocks = [
        (i, j, m, p) for i, j, m, p, k in zip(plan.rows, plan.cols, plan.mass, geodesics, spread) if k
    ]
    masses = _spread(g, x, y, blocks, t).to_grid(grid).masses
    for k in np.nonzero(~spread)[0]:
        edge, s = _locate(geodesics[k], t)
        masses[grid.cell_at(g.edge_index[edge], s)] += plan.mass[k]
    return GridMeasure(grid, masses, check=False)
