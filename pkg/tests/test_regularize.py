import numpy as np
import pytest
from scipy import integrate

from graphot import (
    EpsilonTooLarge,
    ExtendedGraph,
    Grid,
    GridMeasure,
    GridMismatch,
    NodalFunction,
    regularize_function,
    regularize_measure,
)
from graphot.regularize import aux_edge_id, duality_check, kinetic_energy_bound, regularized_density


def _oracle_masses(ext, mu):
    """Masses of the smoothed measure by adaptive quadrature on the single line of an interval."""
    eps, a = ext.eps, ext.alpha[0]
    grid = mu.grid
    half = 0.5 * grid.graph.lengths[0]
    lo = grid.cell_lo - half
    rho = mu.densities

    def cell_mass(z0, z1):
        def integrand(y):
            k = min(np.searchsorted(lo, y, side="right") - 1, len(rho) - 1)
            return rho[k] * max(0.0, min(a * y + eps, z1) - max(a * y - eps, z0)) / (2 * eps)

        pts = np.concatenate([lo, [(z0 - eps) / a, (z0 + eps) / a, (z1 - eps) / a, (z1 + eps) / a]])
        pts = pts[(pts > -half) & (pts < half)]
        return integrate.quad(integrand, -half, half, points=np.unique(pts), limit=400, epsabs=1e-14)[0]

    eg = ext.grid
    out = np.zeros(eg.n_cells)
    for j, e in enumerate(eg.graph.edges):
        sl = slice(eg.cell_offsets[j], eg.cell_offsets[j + 1])
        s0 = eg.cell_lo[sl]
        s1 = s0 + eg.widths[sl]
        if e.id == "I":
            z0, z1 = s0 - half, s1 - half
        elif e.id == aux_edge_id("l"):
            z0, z1 = -half - s1, -half - s0
        else:
            z0, z1 = half + s0, half + s1
        out[sl] = [cell_mass(p, q) for p, q in zip(z0, z1)]
    return out


def test_smoothed_masses_match_quadrature(unit_interval, rng):
    grid = Grid.from_width(unit_interval, 0.05)
    m = rng.uniform(size=grid.n_cells)
    mu = GridMeasure(grid, m / m.sum())
    ext = ExtendedGraph(grid, 0.1)
    reg = regularize_measure(ext, mu)
    np.testing.assert_allclose(reg.masses, _oracle_masses(ext, mu), atol=1e-11)


def test_mass_and_density_bound(star, rng):
    grid = Grid.from_width(star, 0.02)
    m = rng.gamma(0.3, size=grid.n_cells)
    a = np.array([0.2, 0.0, 0.1, 0.0])
    mu = GridMeasure(grid, m / m.sum() * 0.7, a / a.sum() * 0.3)
    eps = 0.05
    ext = ExtendedGraph(grid, eps)
    reg = regularize_measure(ext, mu)
    assert reg.total_mass == pytest.approx(1.0, abs=1e-12)
    assert reg.densities.max() <= 1 / (2 * eps) + grid.h_max
    # a Dirac mass at a vertex becomes the uniform density 1/(2 eps) on its leaf
    dens = regularized_density(ext, mu.copy_with(np.zeros(grid.n_cells)), aux_edge_id("a"), np.array([0.03]))
    assert dens[0] == pytest.approx(0.3 * (0.2 / 0.3) / (2 * eps))


def test_duality_identity(star, rng):
    grid = Grid.from_width(star, 0.05)
    ext = ExtendedGraph(grid, 0.08)
    m = rng.uniform(size=grid.n_cells)
    mu = GridMeasure(grid, m / m.sum())
    phi = NodalFunction(ext.grid, rng.normal(size=ext.grid.n_cells), rng.normal(size=ext.grid.n_vertices))
    lhs, rhs = duality_check(ext, mu, phi)
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_kinetic_energy_does_not_grow(star, rng):
    grid = Grid.from_width(star, 0.05)
    ext = ExtendedGraph(grid, 0.1)
    for _ in range(3):
        m = rng.uniform(0.1, 1.0, size=grid.n_cells)
        mu = GridMeasure(grid, m / m.sum())
        smoothed, original = kinetic_energy_bound(ext, mu, rng.normal(size=grid.n_cells))
        assert smoothed <= original + 1e-8


def test_errors(star, unit_interval):
    grid = Grid.from_width(star, 0.1)
    with pytest.raises(EpsilonTooLarge):
        ExtendedGraph(grid, 0.5)
    with pytest.raises(EpsilonTooLarge):
        ExtendedGraph(grid, 0.0)
    other = Grid.from_width(unit_interval, 0.1)
    with pytest.raises(GridMismatch):
        regularize_measure(ExtendedGraph(grid, 0.1), GridMeasure(other, np.full(10, 0.1)))


def test_weak_convergence_as_eps_shrinks(star, rng):
    # Lipschitz test functions: distance-like profiles along each line
    grid = Grid.from_width(star, 0.005)
    m = rng.uniform(size=grid.n_cells)
    mu = GridMeasure(grid, m / m.sum())
    tests = [lambda e, s: np.cos(2 * s), lambda e, s: np.abs(s - 0.3), lambda e, s: s * (e == "f")]
    errors = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        ext = ExtendedGraph(grid, eps)
        reg = regularize_measure(ext, mu)
        worst = 0.0
        for phi in tests:
            base = np.sum(mu.masses * _phi_on(grid, phi))
            smooth = np.sum(reg.masses * _phi_on(ext.grid, _extended(ext, phi)))
            worst = max(worst, abs(smooth - base))
        errors.append(worst)
    assert all(b < a for a, b in zip(errors[:-1], errors[1:]))
    assert errors[-1] < 0.05


def _phi_on(grid, phi):
    out = np.empty(grid.n_cells)
    for e in grid.graph.edges:
        sl = grid.cells_of(e.id)
        out[sl] = phi(e.id, grid.centers[sl])
    return out


def _extended(ext, phi):
    # on an auxiliary edge, freeze the value at the vertex it hangs from
    vals = {}
    for e in ext.base.edges:
        vals.setdefault(e.init, float(phi(e.id, np.array([0.0]))[0]))
        vals.setdefault(e.term, float(phi(e.id, np.array([e.length]))[0]))

    def f(edge_id, s):
        if edge_id in ext.base.edge_index:
            return phi(edge_id, s)
        v = ext.graph.edge(edge_id).init
        return np.full_like(np.asarray(s, dtype=float), vals[v])

    return f


def test_regularized_derivative_identity(unit_interval, rng):
    # d/dy phi_eps(y) = alpha * (1/2eps) * integral of phi' over the window
    grid = Grid.from_width(unit_interval, 0.02)
    ext = ExtendedGraph(grid, 0.1)
    phi = NodalFunction(ext.grid, rng.normal(size=ext.grid.n_cells), rng.normal(size=ext.grid.n_vertices))
    reg = regularize_function(ext, phi)
    a, eps, half = ext.alpha[0], ext.eps, 0.5
    xs, ys = [], []
    for seg, sign, off in [(aux_edge_id("l"), -1.0, -half), ("I", 1.0, -half), (aux_edge_id("r"), 1.0, half)]:
        x, y = phi._nodes(ext.graph.edge_index[seg])
        xs.append(off + sign * x)
        ys.append(y)
    z = np.concatenate(xs)
    order = np.argsort(z, kind="stable")
    z, v = z[order], np.concatenate(ys)[order]
    s = np.linspace(0.05, 0.95, 13)
    deriv = reg.derivative("I", s)
    fd = (reg.value("I", s + 1e-6) - reg.value("I", s - 1e-6)) / 2e-6
    # the derivative is Lipschitz with constant <= alpha^2 / eps * max |phi'|
    lip = a * a / eps * np.abs(np.diff(v) / np.maximum(np.diff(z), 1e-300)).max()
    np.testing.assert_allclose(deriv, fd, rtol=0, atol=1e-6 * lip)
    for si, d in zip(s, deriv):
        y = si - half
        cuts = np.unique(np.concatenate([[a * y - eps, a * y + eps], z[(z > a * y - eps) & (z < a * y + eps)]]))
        integral = 0.0
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            k = np.clip(np.searchsorted(z, 0.5 * (c0 + c1)) - 1, 0, len(z) - 2)
            integral += (v[k + 1] - v[k]) / (z[k + 1] - z[k]) * (c1 - c0)
        assert d == pytest.approx(a * integral / (2 * eps), abs=1e-10)
