"""Smoothing of functions, measures and fluxes through an extended graph.

Every vertex ``v`` receives an auxiliary leaf edge ``"{v}~ext"`` of length
``2 eps`` running from ``v`` to a new leaf ``"{v}~leaf"``. A base edge ``e`` of
length ``l`` is parametrised by the centred coordinate ``y in [-l/2, l/2]``
and seen together with the auxiliary edges at its two ends as one straight
"line" ``z in [-l/2 - 2 eps, l/2 + 2 eps]``::

    aux(init), reversed     base edge          aux(term)
    z = -l/2 - u            z = s - l/2        z = l/2 + u

A function on the extended graph is smoothed by a moving average,

    phi_eps(y) = 1/(2 eps) * integral of phi over [a y - eps, a y + eps],

with the stretch factor ``a = (l + 2 eps) / l``; measures and fluxes are
smoothed by the adjoint operation, so that ``int phi d(mu_eps) = int
phi_eps d(mu)``. With piecewise polynomial data every quantity here is
computed in closed form.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AtomPresent, EpsilonTooLarge, GridMismatch
from .graph import Edge, MetricGraph
from .measure import Grid, GridMeasure, NodalFunction

__all__ = [
    "ExtendedGraph",
    "RegularizedFunction",
    "regularize_function",
    "regularize_measure",
    "regularized_density",
    "regularize_flux_values",
    "duality_check",
    "kinetic_energy_bound",
    "aux_edge_id",
    "leaf_id",
]

_GAUSS3 = np.polynomial.legendre.leggauss(3)


def aux_edge_id(v):
    return f"{v}~ext"


def leaf_id(v):
    return f"{v}~leaf"


class ExtendedGraph:
    """Base graph plus one auxiliary leaf edge of length ``2 eps`` per vertex.

    Parameters
    ----------
    grid : Grid
        Grid on the base graph; its cells are reused on the base edges.
    eps : float
        Half window width, ``0 < 2 eps < min edge length``.
    aux_cells : int, optional
        Cells per auxiliary edge. Defaults to ``ceil(2 eps / h_min)``.
    """

    def __init__(self, grid, eps, aux_cells=None):
        base = grid.graph
        if not eps > 0:
            raise EpsilonTooLarge("eps must be positive")
        if 2 * eps >= base.lengths.min():
            raise EpsilonTooLarge(
                f"2*eps={2 * eps} must be below the shortest edge {base.lengths.min()}"
            )
        self.base = base
        self.base_grid = grid
        self.eps = float(eps)
        self.alpha = (base.lengths + 2 * eps) / base.lengths

        verts = list(base.vertices) + [leaf_id(v) for v in base.vertices]
        edges = list(base.edges)
        edges += [Edge(aux_edge_id(v), v, leaf_id(v), 2 * eps) for v in base.vertices]
        self.graph = MetricGraph(verts, edges)

        if aux_cells is None:
            aux_cells = max(1, math.ceil(2 * eps / grid.h_min - 1e-9))
        self.aux_cells = int(aux_cells)
        counts = list(grid.counts) + [self.aux_cells] * len(base.vertices)
        self.grid = Grid(self.graph, counts)
        self.n_base_edges = len(base.edges)

    def aux_index(self, v):
        """Edge index (in the extended graph) of the auxiliary edge at ``v``."""
        return self.n_base_edges + self.base.vertex_index[v]

    def line_segments(self, k):
        """Pieces of the line of base edge ``k``: (ext edge index, z0, z1, sign, offset).

        A point ``s`` of the piece's ext edge sits at ``z = offset + sign * s``.
        """
        half = 0.5 * self.base.lengths[k]
        two_eps = 2 * self.eps
        vi = self.base.init_idx[k]
        vt = self.base.term_idx[k]
        return [
            (self.n_base_edges + vi, -half - two_eps, -half, -1.0, -half),
            (k, -half, half, 1.0, -half),
            (self.n_base_edges + vt, half, half + two_eps, 1.0, half),
        ]

    def lines_through(self, ext_edge):
        """(base edge k, sign, offset) for every line containing ``ext_edge``."""
        if ext_edge < self.n_base_edges:
            half = 0.5 * self.base.lengths[ext_edge]
            return [(ext_edge, 1.0, -half)]
        v = ext_edge - self.n_base_edges
        out = []
        for k in range(self.n_base_edges):
            half = 0.5 * self.base.lengths[k]
            if self.base.init_idx[k] == v:
                out.append((k, -1.0, -half))
            elif self.base.term_idx[k] == v:
                out.append((k, 1.0, half))
        return out

    def restrict(self, ext_measure):
        """Base part of a measure on the extended grid (aux mass is dropped)."""
        n = self.base_grid.n_cells
        return GridMeasure(self.base_grid, ext_measure.masses[:n], ext_measure.atoms[: self.base_grid.n_vertices], check=False)


# -------------------------------------------------- piecewise profiles


class _Profile:
    """Density ``c0 + c1 (y - a)`` on pieces ``[a, b]``; zero elsewhere.

    ``F`` is the cumulative integral and ``G`` the integral of ``F``, both
    started at the far left.
    """

    def __init__(self, a, b, c0, c1=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c0 = np.asarray(c0, dtype=float)
        self.c1 = np.zeros_like(self.c0) if c1 is None else np.asarray(c1, dtype=float)
        L = self.b - self.a
        self.piece_mass = self.c0 * L + 0.5 * self.c1 * L**2

    @property
    def breakpoints(self):
        return np.unique(np.concatenate([self.a, self.b]))

    def F(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        u = np.clip(x, self.a, self.b) - self.a
        return np.sum(self.c0 * u + 0.5 * self.c1 * u**2, axis=-1)

    def G(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        u = np.clip(x, self.a, self.b) - self.a
        inside = self.c0 * u**2 / 2 + self.c1 * u**3 / 6
        beyond = self.piece_mass * np.maximum(x - self.b, 0.0)
        return np.sum(inside + beyond, axis=-1)

    def window_density(self, z, alpha, eps):
        """Pointwise density of the smoothed profile on the line."""
        z = np.asarray(z, dtype=float)
        return (self.F((z + eps) / alpha) - self.F((z - eps) / alpha)) / (2 * eps)

    def window_mass(self, z0, z1, alpha, eps):
        """Mass of the smoothed profile on ``[z0, z1]`` of the line."""
        G = self.G
        return (alpha / (2 * eps)) * (
            G((z1 + eps) / alpha) - G((z0 + eps) / alpha) - G((z1 - eps) / alpha) + G((z0 - eps) / alpha)
        )


def _measure_profiles(mu):
    grid = mu.grid
    out = []
    for k in range(len(grid.counts)):
        sl = slice(grid.cell_offsets[k], grid.cell_offsets[k + 1])
        half = 0.5 * grid.graph.lengths[k]
        lo = grid.cell_lo[sl] - half
        out.append(_Profile(lo, lo + grid.widths[sl], mu.densities[sl]))
    return out


def _flux_profiles(grid, faces, scale=None):
    """Profiles of fluxes linear between consecutive face values."""
    out = []
    for k in range(len(grid.counts)):
        fs = faces[grid.face_offsets[k]:grid.face_offsets[k + 1]]
        if scale is not None:
            fs = fs * scale[k]
        h = grid.edge_h[k]
        half = 0.5 * grid.graph.lengths[k]
        lo = np.arange(grid.counts[k]) * h - half
        out.append(_Profile(lo, lo + h, fs[:-1], np.diff(fs) / h))
    return out


def _check_base_grid(ext, grid):
    if not ext.base_grid.same_as(grid):
        raise GridMismatch("measure lives on a different grid than the extension")


# ------------------------------------------------------------ measures


def regularize_measure(ext, mu):
    """Smoothed measure on the extended grid, integrated cell by cell.

    Vertex atoms spread uniformly over their auxiliary edge.
    """
    _check_base_grid(ext, mu.grid)
    return GridMeasure(ext.grid, _ext_cell_masses(ext, _measure_profiles(mu), mu.atoms), check=False)


def _ext_cell_masses(ext, profiles, atoms=None):
    eg = ext.grid
    eps = ext.eps
    masses = np.zeros(eg.n_cells)
    for k, prof in enumerate(profiles):
        for j, z0, z1, sign, offset in ext.line_segments(k):
            sl = slice(eg.cell_offsets[j], eg.cell_offsets[j + 1])
            lo = eg.cell_lo[sl]
            hi = lo + eg.widths[sl]
            za, zb = offset + sign * lo, offset + sign * hi
            zlo, zhi = np.minimum(za, zb), np.maximum(za, zb)
            masses[sl] += prof.window_mass(zlo, zhi, ext.alpha[k], eps)
    if atoms is not None:
        for v in range(ext.base.vertices.__len__()):
            if atoms[v] != 0:
                sl = eg.cells_of(aux_edge_id(ext.base.vertices[v]))
                masses[sl] += atoms[v] * eg.widths[sl] / (2 * eps)
    return masses


def regularized_density(ext, mu, edge_id, s):
    """Pointwise density of the smoothed measure at ``s`` on an extended edge.

    Uses the closed form: ``(1 / 2 eps)`` times the mass that ``mu`` puts on
    the window ``((z - eps) / a, (z + eps) / a)`` of every base edge whose
    line passes through the point, plus the spread vertex atom on
    auxiliary edges.
    """
    _check_base_grid(ext, mu.grid)
    g = ext.graph
    j = g.edge_index[edge_id]
    s = np.asarray(s, dtype=float)
    cum = {}
    out = np.zeros_like(s)
    for k, sign, offset in ext.lines_through(j):
        z = offset + sign * s
        if k not in cum:
            cum[k] = _measure_profiles_edge(mu, k)
        a = ext.alpha[k]
        half = 0.5 * ext.base.lengths[k]
        lo = np.clip((z - ext.eps) / a, -half, half)
        hi = np.clip((z + ext.eps) / a, -half, half)
        out = out + (_cdf(cum[k], hi) - _cdf(cum[k], lo)) / (2 * ext.eps)
    if j >= ext.n_base_edges:
        atom = mu.atoms[j - ext.n_base_edges]
        out = out + np.where((s >= 0) & (s <= 2 * ext.eps), atom / (2 * ext.eps), 0.0)
    return out


def _measure_profiles_edge(mu, k):
    grid = mu.grid
    sl = slice(grid.cell_offsets[k], grid.cell_offsets[k + 1])
    half = 0.5 * grid.graph.lengths[k]
    edges = np.concatenate([grid.cell_lo[sl], [grid.graph.lengths[k]]]) - half
    cum = np.concatenate([[0.0], np.cumsum(mu.masses[sl])])
    return edges, cum


def _cdf(table, x):
    # piecewise-linear cumulative mass of a cellwise-constant density
    edges, cum = table
    return np.interp(x, edges, cum)


def regularize_flux_values(ext, grid, faces, weighted=True):
    """Pointwise values of a smoothed flux at every face of the extended grid.

    ``faces`` holds flux values on the base grid faces, read as a flux that
    is linear between faces. With ``weighted`` each base edge's flux is
    multiplied by its stretch factor before smoothing; that is the flux
    which transports the smoothed measures exactly.
    """
    _check_base_grid(ext, grid)
    eg = ext.grid
    profiles = _flux_profiles(grid, np.asarray(faces, dtype=float), ext.alpha if weighted else None)
    out = np.zeros(eg.n_faces)
    for k, prof in enumerate(profiles):
        for j, z0, z1, sign, offset in ext.line_segments(k):
            sl = slice(eg.face_offsets[j], eg.face_offsets[j + 1])
            z = offset + sign * eg.face_s[sl]
            out[sl] += sign * prof.window_density(z, ext.alpha[k], ext.eps)
    return out


# ----------------------------------------------------------- functions


class _LineFunction:
    """Piecewise-linear function on the line of one base edge."""

    def __init__(self, xs, ys):
        self.xs = xs
        self.ys = ys
        self.cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])

    def __call__(self, z):
        return np.interp(z, self.xs, self.ys)

    def primitive(self, z):
        xs, ys = self.xs, self.ys
        z = np.asarray(z, dtype=float)
        i = np.clip(np.searchsorted(xs, z, side="right") - 1, 0, len(xs) - 2)
        u = z - xs[i]
        slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
        return self.cum[i] + ys[i] * u + 0.5 * slope * u * u


def _line_function(ext, phi, k):
    xs_all, ys_all = [], []
    for j, z0, z1, sign, offset in ext.line_segments(k):
        xs, ys = phi._nodes(j)
        z = offset + sign * xs
        if sign < 0:
            z, ys = z[::-1], ys[::-1]
        if xs_all:
            z, ys = z[1:], ys[1:]
        xs_all.append(z)
        ys_all.append(ys)
    return _LineFunction(np.concatenate(xs_all), np.concatenate(ys_all))


class RegularizedFunction:
    """Smoothed version of a nodal function on the extended graph."""

    def __init__(self, ext, phi):
        if not phi.grid.same_as(ext.grid):
            raise GridMismatch("function must live on the extended grid")
        self.ext = ext
        self.phi = phi
        self.lines = [_line_function(ext, phi, k) for k in range(ext.n_base_edges)]

    def _parts(self, edge_id, s):
        k = self.ext.base.edge_index[edge_id]
        y = np.asarray(s, dtype=float) - 0.5 * self.ext.base.lengths[k]
        return self.lines[k], self.ext.alpha[k], y

    def value(self, edge_id, s):
        line, a, y = self._parts(edge_id, s)
        eps = self.ext.eps
        return (line.primitive(a * y + eps) - line.primitive(a * y - eps)) / (2 * eps)

    __call__ = value

    def derivative(self, edge_id, s):
        line, a, y = self._parts(edge_id, s)
        eps = self.ext.eps
        return a / (2 * eps) * (line(a * y + eps) - line(a * y - eps))

    def breakpoints(self, edge_id):
        """Points of the base edge where the smoothed function changes formula."""
        k = self.ext.base.edge_index[edge_id]
        line, a = self.lines[k], self.ext.alpha[k]
        half = 0.5 * self.ext.base.lengths[k]
        y = np.concatenate([(line.xs - self.ext.eps) / a, (line.xs + self.ext.eps) / a])
        y = y[(y > -half) & (y < half)]
        return np.unique(np.concatenate([[-half, half], y])) + half

    def on_grid(self, grid=None):
        """Sample at cell centres and vertices of the base grid."""
        grid = grid or self.ext.base_grid
        return NodalFunction.from_callable(grid, self.value)


def regularize_function(ext, phi):
    """Smooth a nodal function on the extended graph; see the module docstring."""
    return RegularizedFunction(ext, phi)


# ------------------------------------------------------------- checks


def _gauss_integral(f, cuts):
    nodes, weights = _GAUSS3
    a, b = cuts[:-1], cuts[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    return float(np.sum(half[:, None] * weights[None, :] * f(x)))


def duality_check(ext, mu, phi):
    """Both sides of ``int phi d(mu_eps) = int phi_eps d(mu)``.

    The left side integrates ``phi`` against the pointwise smoothed density,
    the right side integrates the smoothed function against ``mu``. Both
    integrands are piecewise polynomials of degree at most three, so Gauss
    quadrature on the merged breakpoints is exact up to rounding.

    Returns
    -------
    (lhs, rhs) : tuple of float
    """
    _check_base_grid(ext, mu.grid)
    eps = ext.eps
    lhs = 0.0
    for j, e in enumerate(ext.graph.edges):
        cuts = [phi.breakpoints(e.id)]
        for k, sign, offset in ext.lines_through(j):
            half = 0.5 * ext.base.lengths[k]
            cells = mu.grid.cell_lo[mu.grid.cell_offsets[k]:mu.grid.cell_offsets[k + 1]] - half
            b = np.concatenate([cells, [half]])
            z = np.concatenate([ext.alpha[k] * b - eps, ext.alpha[k] * b + eps])
            cuts.append((z - offset) / sign)
        c = np.unique(np.clip(np.concatenate(cuts), 0.0, e.length))
        lhs += _gauss_integral(
            lambda s, _e=e.id: phi(_e, s) * regularized_density(ext, mu, _e, s), c
        )

    smooth = regularize_function(ext, phi)
    rhs = 0.0
    base = mu.grid
    for e in ext.base.edges:
        sl = base.cells_of(e.id)
        c = np.unique(np.concatenate([smooth.breakpoints(e.id), base.cell_lo[sl], [e.length]]))
        dens = mu.densities[sl]
        h = base.edge_h[base.graph.edge_index[e.id]]

        def integrand(s, _e=e.id, _d=dens, _h=h):
            idx = np.clip((s // _h).astype(int), 0, len(_d) - 1)
            return smooth(_e, s) * _d[idx]

        rhs += _gauss_integral(integrand, c)
    for i, v in enumerate(ext.base.vertices):
        if mu.atoms[i] != 0:
            p = ext.base.vertex_point(v)
            rhs += mu.atoms[i] * float(smooth(p.edge, np.array([p.s]))[0])
    return lhs, rhs


def _int_square_over_linear(q, r0, r1, length):
    """Exact ``int_0^1 q(t)^2 / r(t) dt * length`` with ``r`` linear, ``r >= 0``.

    ``q`` holds polynomial coefficients in ``t`` (low order first).
    """
    q = np.polynomial.Polynomial(q)
    if r0 <= 0 and r1 <= 0:
        return 0.0 if np.all(np.abs(q.coef) == 0) else math.inf
    big, small = max(r0, r1), min(r0, r1)
    if r1 > r0:
        q = q(np.polynomial.Polynomial([1.0, -1.0]))
    # now r(t) = big * (1 - d t) with d in [0, 1]
    d = (big - small) / big
    q2 = (q * q).coef
    if d <= 0.5:
        total, n, term = 0.0, 0, 1.0
        while True:
            piece = sum(c / (k + n + 1) for k, c in enumerate(q2))
            total += term * piece
            term *= d
            n += 1
            if abs(term * piece) <= 1e-17 * abs(total) or n > 200:
                break
        return total / big * length
    # substitute w = big (1 - d t), t = (1 - w / big) / d
    qw = q(np.polynomial.Polynomial([1.0 / d, -1.0 / (d * big)]))
    c = (qw * qw).coef
    if small <= 0:
        if abs(c[0]) > 1e-14 * max(1.0, np.abs(c).max()):
            return math.inf
        log_term = 0.0
    else:
        log_term = c[0] * math.log(big / small)
    poly = sum(ck * (big**k - small**k) / k for k, ck in enumerate(c) if k > 0)
    return (log_term + poly) / (big * d) * length


def _line_kinetic(ext, rho_prof, flux_prof, k):
    """int (flux_eps)^2 / rho_eps over the line of base edge k."""
    a, eps = ext.alpha[k], ext.eps
    half = 0.5 * ext.base.lengths[k]
    bps = np.concatenate([rho_prof.breakpoints, flux_prof.breakpoints])
    cuts = np.unique(np.concatenate([a * bps - eps, a * bps + eps, [-half - 2 * eps, half + 2 * eps]]))
    cuts = cuts[(cuts >= -half - 2 * eps) & (cuts <= half + 2 * eps)]
    return cuts


def kinetic_energy_bound(ext, mu, velocity):
    """Kinetic energy of a flux ``J = v mu`` before and after smoothing.

    ``velocity`` holds one value per base cell. The smoothed flux and
    measure are both continuous piecewise polynomials on every line, so the
    smoothed energy ``int |J_eps|^2 / rho_eps`` is integrated in closed
    form on the extended edges (lines meeting on an auxiliary edge are
    summed before squaring).

    Returns
    -------
    (smoothed, original) : tuple of float
    """
    _check_base_grid(ext, mu.grid)
    if mu.has_atoms:
        raise AtomPresent("kinetic energy needs an atom-free measure")
    grid = mu.grid
    v = np.asarray(velocity, dtype=float).reshape(grid.n_cells)
    original = float(np.sum(v**2 * mu.masses))
    rho = _measure_profiles(mu)
    jflux = v * mu.densities
    flux = []
    for k in range(len(grid.counts)):
        sl = slice(grid.cell_offsets[k], grid.cell_offsets[k + 1])
        half = 0.5 * grid.graph.lengths[k]
        lo = grid.cell_lo[sl] - half
        flux.append(_Profile(lo, lo + grid.widths[sl], jflux[sl]))

    eps = ext.eps
    # flux left over from cancelling window sums is round-off, not transport
    noise = 1e-13 * max(float(np.abs(jflux).max(initial=0.0)), 1e-300)
    smoothed = 0.0
    for j, e in enumerate(ext.graph.edges):
        lines = ext.lines_through(j)
        cuts = [np.array([0.0, e.length])]
        for k, sign, offset in lines:
            z = _line_kinetic(ext, rho[k], flux[k], k)
            cuts.append((z - offset) / sign)
        c = np.unique(np.clip(np.concatenate(cuts), 0.0, e.length))
        c = c[np.concatenate([[True], np.diff(c) > 1e-15 * e.length])]
        for s0, s1 in zip(c[:-1], c[1:]):
            ts = np.array([0.0, 0.5, 1.0])
            s = s0 + (s1 - s0) * ts
            r = np.zeros(3)
            f = np.zeros(3)
            for k, sign, offset in lines:
                z = offset + sign * s
                r += rho[k].window_density(z, ext.alpha[k], eps)
                f += sign * flux[k].window_density(z, ext.alpha[k], eps)
            r = np.maximum(r, 0.0)
            f[np.abs(f) <= noise] = 0.0
            # flux is linear on each piece here (cellwise-constant J); fit exactly
            q = np.polynomial.polynomial.polyfit(ts, f, 2)
            smoothed += _int_square_over_linear(q, r[0], r[2], s1 - s0)
    return smoothed, original
