import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

from graphot import Grid, GridMeasure, c_transform, geodesic_interpolation, hopf_lax, wasserstein
from graphot.graph import point_distance_matrix
from graphot.transport import SupportCloud, verify_hopf_lax_properties


def _quantile_w2sq(x, a, y, b):
    """W_2^2 of two discrete measures on a line by the monotone coupling."""
    ia, ib = np.argsort(x), np.argsort(y)
    x, a, y, b = x[ia], a[ia], y[ib], b[ib]
    ca, cb = np.cumsum(a), np.cumsum(b)
    cuts = np.unique(np.concatenate([[0.0], ca, cb]))
    cuts = cuts[cuts <= 1.0]
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    qa = x[np.minimum(np.searchsorted(ca, mids), len(x) - 1)]
    qb = y[np.minimum(np.searchsorted(cb, mids), len(y) - 1)]
    return float(np.sum(np.diff(cuts) * (qa - qb) ** 2))


def _lp_cost(D, a, b):
    n, m = D.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    res = linprog(D.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


def test_interval_w2_matches_monotone_coupling(unit_interval):
    grid = Grid.from_width(unit_interval, 0.05)
    mu = GridMeasure.from_density(grid, lambda e, s: 2 * s)
    nu = GridMeasure.from_density(grid, lambda e, s: 2 * (1 - s))
    r = wasserstein(unit_interval, mu, nu)
    oracle = _quantile_w2sq(grid.centers, mu.masses, grid.centers, nu.masses)
    assert r.value**2 == pytest.approx(oracle, abs=1e-12)
    assert abs(r.duality_gap) <= 1e-8


def test_interval_w1_matches_scipy(unit_interval, rng):
    grid = Grid.from_width(unit_interval, 0.05)
    a, b = rng.uniform(size=(2, grid.n_cells))
    mu, nu = GridMeasure(grid, a / a.sum()), GridMeasure(grid, b / b.sum())
    r = wasserstein(unit_interval, mu, nu, p=1)
    oracle = wasserstein_distance(grid.centers, grid.centers, mu.masses, nu.masses)
    assert r.value == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("p", [1, 2])
def test_star_cost_matches_linprog(star, rng, p):
    grid = Grid.from_width(star, 0.25)
    a, b = rng.uniform(size=(2, grid.n_cells))
    mu, nu = GridMeasure(grid, a / a.sum()), GridMeasure(grid, b / b.sum())
    r = wasserstein(star, mu, nu, p=p)
    e = grid.support_edges[: grid.n_cells]
    s = grid.support_s[: grid.n_cells]
    D = point_distance_matrix(star, e, s, e, s) ** p
    assert r.cost == pytest.approx(_lp_cost(D, mu.masses, nu.masses), abs=1e-10)
    r.plan.check_marginals()
    assert r.dual_infeasibility <= 1e-10


def test_duals_are_c_concave_pair(star, rng):
    grid = Grid.from_width(star, 0.2)
    a, b = rng.uniform(size=(2, grid.n_cells))
    r = wasserstein(star, GridMeasure(grid, a / a.sum()), GridMeasure(grid, b / b.sum()))
    x, y = r.plan.source, r.plan.target
    psi = c_transform(x, r.duals.phi, y=y)
    C = point_distance_matrix(star, x.edges, x.s, y.edges, y.s) ** 2
    assert np.all(r.duals.phi[:, None] + psi[None, :] <= C + 1e-9)
    # complementary slackness on the plan support
    np.testing.assert_allclose(
        r.duals.phi[r.plan.rows] + psi[r.plan.cols], C[r.plan.rows, r.plan.cols], atol=1e-8
    )


def test_example_point_masses(star):
    # one unit from the middle of e1 to the middle of f: cost 1
    x = SupportCloud.from_points(star, [star.point("e1", 0.5)], [1.0])
    y = SupportCloud.from_points(star, [star.point("f", 0.5)], [1.0])
    assert wasserstein(star, x, y).value == pytest.approx(1.0, abs=1e-14)


def test_geodesic_interpolation_endpoints(star, rng):
    grid = Grid.from_width(star, 0.1)
    a, b = rng.uniform(size=(2, grid.n_cells))
    mu, nu = GridMeasure(grid, a / a.sum()), GridMeasure(grid, b / b.sum())
    r = wasserstein(star, mu, nu)
    m0 = geodesic_interpolation(star, mu, nu, r.plan, 0.0, grid=grid)
    m1 = geodesic_interpolation(star, mu, nu, r.plan, 1.0, grid=grid)
    mh = geodesic_interpolation(star, mu, nu, r.plan, 0.5, grid=grid)
    assert m0.l1_distance(mu) <= 1e-12
    assert m1.l1_distance(nu) <= 1e-12
    assert mh.total_mass == pytest.approx(1.0, abs=1e-12)


def test_hopf_lax_linear_function(unit_interval):
    # Q_t f(x) = a x - a^2 t / 2 away from the left end for f(x) = a x
    h, a, t = 0.01, 1.0, 0.2
    grid = Grid.from_width(unit_interval, h)
    nodes = np.concatenate([grid.centers, [0.0, 1.0]])
    q = hopf_lax(grid, a * nodes, t)
    inner = nodes >= a * t + h
    np.testing.assert_allclose(q[inner], a * nodes[inner] - a * a * t / 2, atol=h * h / t)
    assert np.all(q <= a * nodes + 1e-15)


def test_hopf_lax_properties_hold(star):
    grid = Grid.from_width(star, 0.02)
    nodes_s = grid.support_s
    f = np.sin(3 * nodes_s) + 0.5 * (grid.support_edges == 0)
    rep = verify_hopf_lax_properties(grid, f, [0.1, 0.5])
    assert rep.max_lip_ratio <= 2 * (1 + 5 * 0.02)


def test_w2_discretisation_error_decreases(unit_interval):
    # continuum value by the quantile formula: F^-1(u) = sqrt(u), G^-1(u) = 1 - sqrt(1 - u)
    exact = np.sqrt(quad(lambda u: (np.sqrt(u) - 1 + np.sqrt(1 - u)) ** 2, 0, 1)[0])
    errors = []
    for h in (0.1, 0.05, 0.025, 0.0125):
        grid = Grid.from_width(unit_interval, h)
        mu = GridMeasure.from_density(grid, lambda e, s: 2 * s)
        nu = GridMeasure.from_density(grid, lambda e, s: 2 * (1 - s))
        errors.append(abs(wasserstein(unit_interval, mu, nu).value - exact))
    assert all(b < a for a, b in zip(errors[:-1], errors[1:]))
