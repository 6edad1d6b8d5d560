"""Continuity equation, kinetic action and dynamical optimal transport.

Discretisation: densities live at cell centres and integer times, fluxes
at faces and half times. One step of the continuity equation reads

    h_i (d_i^{k+1} - d_i^k) + dt (U_right(i)^k - U_left(i)^k) = 0,

and every vertex balances its incident boundary fluxes,
``sum_e iota_ev U_e(v) = 0``. The kinetic action of a step is
``dt * sum_f w_f U_f^2 / rho_f`` with ``w_f`` the dual width of face ``f``
(``h`` inside an edge, ``h/2`` at its ends) and ``rho_f`` the face average
of the mid-step density.

The minimal action over discrete paths is found with the first-order
primal-dual method of Chambolle and Pock: the linear constraints are an
affine projection (factorised once), the action is handled through the
proximal map of ``(rho, U) -> c U^2 / rho``, whose root is that of a
scalar cubic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsqr, splu

from .errors import AtomPresent, GridMismatch, NotConverged
from .measure import GridMeasure
from .regularize import regularize_flux_values, regularize_measure

__all__ = [
    "FluxField",
    "SpaceTimePath",
    "ActionValue",
    "ContinuityReport",
    "check_continuity",
    "bb_action",
    "path_action",
    "solve_bb",
    "BBResult",
    "perspective_prox",
    "SolverOptions",
    "flux_between",
    "RegularizedPath",
    "regularize_path",
]


class FluxField:
    """Flux values at every face of a grid (edge orientation gives the sign)."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=float).reshape(grid.n_faces)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("flux has non-finite entries")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n_faces))

    def divergence(self):
        """Net outflow of every cell."""
        return self.grid.divergence @ self.values

    def vertex_balance(self):
        """``sum_e iota_ev U_e(v)`` for every vertex."""
        return self.grid.kirchhoff @ self.values


@dataclass
class SpaceTimePath:
    """Measures at ``times[k]`` and fluxes on ``[times[k], times[k+1]]``."""

    times: np.ndarray
    measures: list
    fluxes: list

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.measures) != len(self.times) or len(self.fluxes) != len(self.times) - 1:
            raise ValueError("need K+1 measures and K fluxes for K steps")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase")
        grid = self.measures[0].grid
        for m in self.measures:
            if not m.grid.same_as(grid):
                raise GridMismatch("measures of a path must share one grid")
        for J in self.fluxes:
            if not J.grid.same_as(grid):
                raise GridMismatch("fluxes must live on the measures' grid")

    @property
    def grid(self):
        return self.measures[0].grid

    @property
    def steps(self):
        return len(self.fluxes)

    @classmethod
    def constant(cls, mu, times):
        times = np.asarray(times, dtype=float)
        return cls(times, [mu] * len(times), [FluxField.zeros(mu.grid)] * (len(times) - 1))


@dataclass
class ActionValue:
    """Kinetic action ``int |v|^2 dmu`` (twice the Benamou-Brenier functional)."""

    value: float
    velocity: np.ndarray | None = None

    @property
    def finite(self):
        return math.isfinite(self.value)


@dataclass
class ContinuityReport:
    cell_max: float
    cell_l1: float
    vertex_max: float
    vertex_l1: float

    @property
    def max(self):
        return max(self.cell_max, self.vertex_max)


def check_continuity(path):
    """Residuals of the discrete continuity equation and vertex balance.

    Cell residuals are ``m^{k+1} - m^k + dt (U_right - U_left)`` in mass
    units; vertex residuals are the signed flux sums at each node. Both are
    reported as maximum and as sum of absolute values over the whole path.
    """
    for m in path.measures:
        if m.has_atoms:
            raise AtomPresent("paths carry no vertex atoms")
    cmax = cl1 = vmax = vl1 = 0.0
    for k, J in enumerate(path.fluxes):
        dt = path.times[k + 1] - path.times[k]
        r = path.measures[k + 1].masses - path.measures[k].masses + dt * J.divergence()
        v = J.vertex_balance()
        cmax = max(cmax, float(np.abs(r).max()))
        cl1 += float(np.abs(r).sum())
        vmax = max(vmax, float(np.abs(v).max(initial=0.0)))
        vl1 += float(np.abs(v).sum())
    return ContinuityReport(cmax, cl1, vmax, vl1)


def flux_between(mu0, mu1, dt):
    """Least-norm flux carrying ``mu0`` to ``mu1`` in one step of length ``dt``.

    Solves the discrete continuity equation together with the vertex
    balance; on a tree the solution is unique. Round-off below ``1e-13``
    times the largest entry is cleared so that empty faces carry no flux.
    """
    if not mu0.grid.same_as(mu1.grid):
        raise GridMismatch("measures live on different grids")
    if mu0.has_atoms or mu1.has_atoms:
        raise AtomPresent("fluxes are defined between atom-free measures")
    grid = mu0.grid
    A = sp.vstack([dt * grid.divergence, grid.kirchhoff], format="csr")
    b = np.concatenate([mu0.masses - mu1.masses, np.zeros(grid.n_vertices)])
    U = lsqr(A, b, atol=1e-15, btol=1e-15, iter_lim=50 * grid.n_faces)[0]
    U[np.abs(U) < 1e-13 * max(np.abs(U).max(initial=0.0), 1e-300)] = 0.0
    return FluxField(grid, U)


def _perspective(U, rho, weight):
    """``sum weight * U^2 / rho`` with the lower-semicontinuous conventions."""
    out = np.zeros_like(U)
    pos = rho > 0
    out[pos] = U[pos] ** 2 / rho[pos]
    bad = (~pos) & (U != 0)
    if np.any(bad):
        return math.inf, None
    return float(np.sum(weight * out)), pos


def bb_action(mu, J):
    """Kinetic action ``sum_f w_f U_f^2 / rho_f`` of a flux against a measure.

    ``rho_f`` is the face average of the cell densities. The action is
    infinite when the measure has negative entries or some face carries
    flux without density.
    """
    if mu.has_atoms:
        raise AtomPresent("action needs an atom-free measure")
    if not mu.grid.same_as(J.grid):
        raise GridMismatch("measure and flux live on different grids")
    if mu.masses.min() < 0:
        return ActionValue(math.inf)
    grid = mu.grid
    rho = grid.face_average @ mu.densities
    value, pos = _perspective(J.values, rho, grid.face_weight)
    if pos is None:
        return ActionValue(math.inf)
    v = np.zeros_like(rho)
    v[pos] = J.values[pos] / rho[pos]
    return ActionValue(value, v)


def path_action(path):
    """``sum_k dt_k * action(midpoint measure, flux)`` along a path."""
    total = 0.0
    for k, J in enumerate(path.fluxes):
        dt = path.times[k + 1] - path.times[k]
        a, b = path.measures[k], path.measures[k + 1]
        mid = GridMeasure(a.grid, 0.5 * (a.masses + b.masses), check=False)
        total += dt * bb_action(mid, J).value
    return total


# ------------------------------------------------------ primal-dual engine


def perspective_prox(rho0, U0, gamma, iters=80):
    """Proximal map of ``(rho, U) -> gamma U^2 / rho``, elementwise.

    Solves ``argmin gamma U^2/rho + |rho - rho0|^2/2 + |U - U0|^2/2``. The
    optimal ``rho`` is the largest root of
    ``(rho - rho0)(rho + 2 gamma)^2 - gamma U0^2``, found by Newton's method
    started to the right of the root where the cubic is convex and
    increasing, so the iterates decrease monotonically. When that root is
    not positive the minimiser is ``(0, 0)``.
    """
    rho0 = np.asarray(rho0, dtype=float)
    U0 = np.asarray(U0, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), rho0.shape)
    gU2 = gamma * U0**2
    zero = rho0 * 4 * gamma**2 + gU2 <= 0  # cubic is >= 0 at rho = 0
    r = np.maximum(rho0, 0.0) + np.cbrt(gU2)
    for _ in range(iters):
        q = r + 2 * gamma
        p = (r - rho0) * q * q - gU2
        dp = q * q + 2 * (r - rho0) * q
        step = np.where(dp > 0, p / np.where(dp > 0, dp, 1.0), 0.0)
        r_new = r - step
        if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(r))):
            r = r_new
            break
        r = r_new
    r = np.where(zero, 0.0, np.maximum(r, 0.0))
    U = np.where(zero, 0.0, U0 * r / (r + 2 * gamma))
    return r, U


@dataclass
class SolverOptions:
    """Controls of the primal-dual iteration."""

    tol_action: float = 1e-7
    tol_continuity: float = 1e-9
    max_iter: int = 200_000
    check_every: int = 50
    power_iterations: int = 50
    step_safety: float = 0.99
    # primal/dual step balance: tau = safety * theta / |K|, sigma = safety / (theta |K|)
    theta: float = 10.0
    verbose: bool = False


class _SpaceTime:
    """Linear algebra of the staggered space-time discretisation.

    Unknowns ``x = [d^1 .. d^{K-1} (or d^K), U^0 .. U^{K-1}]``. With
    ``free_end`` the terminal density is an unknown and is exposed as an
    extra block of ``K x`` for a terminal cost.
    """

    def __init__(self, grid, K, d0, dK=None):
        self.grid = grid
        self.K = K
        self.free_end = dK is None
        N, F, V = grid.n_cells, grid.n_faces, grid.n_vertices
        self.N, self.F, self.V = N, F, V
        self.nd_steps = K if self.free_end else K - 1
        self.nd = self.nd_steps * N
        self.nu = K * F
        self.n = self.nd + self.nu
        self.dt = 1.0 / K
        h = grid.widths
        D = grid.divergence
        B = grid.kirchhoff
        S = grid.face_average

        def dcol(k):
            # column offset of d^k (k = 1 .. nd_steps)
            return (k - 1) * N

        def ucol(k):
            return self.nd + k * F

        b_cont = np.zeros(K * N)
        Hd = sp.diags(h)
        blocks = []
        for k in range(K):
            # h (d^{k+1} - d^k) + dt D U^k = 0
            entries = {}
            if k >= 1:
                entries[dcol(k)] = -Hd
            else:
                b_cont[:N] += h * d0
            if k + 1 <= self.nd_steps:
                entries[dcol(k + 1)] = Hd
            else:
                b_cont[k * N:(k + 1) * N] -= h * dK
            entries[ucol(k)] = self.dt * D
            blocks.append(entries)
        A_cont = self._assemble(blocks, N)
        A_kir = sp.block_diag([B] * K, format="csr")
        A_kir = sp.hstack([sp.csr_matrix((K * V, self.nd)), A_kir], format="csr")
        b_kir = np.zeros(K * V)
        if not self.free_end:
            # the rows are linearly dependent through total mass; drop one
            keep = np.ones(K * V, dtype=bool)
            keep[(K - 1) * V] = False
            A_kir = A_kir[keep]
            b_kir = b_kir[keep]
        self.A = sp.vstack([A_cont, A_kir], format="csc")
        self.b = np.concatenate([b_cont, b_kir])
        AAt = (self.A @ self.A.T).tocsc()
        self._lu = splu(AAt, permc_spec="COLAMD")

        # K operator: rho_tilde (K*F), U (K*F), optionally d^K (N)
        rho_blocks = []
        c_rho = np.zeros(K * F)
        halfS = 0.5 * S
        for k in range(K):
            entries = {}
            if k >= 1:
                entries[dcol(k)] = halfS
            else:
                c_rho[:F] += 0.5 * (S @ d0)
            if k + 1 <= self.nd_steps:
                entries[dcol(k + 1)] = entries.get(dcol(k + 1), 0) + halfS
            else:
                c_rho[k * F:(k + 1) * F] += 0.5 * (S @ dK)
            rho_blocks.append(entries)
        R = self._assemble(rho_blocks, F)
        Uid = sp.hstack([sp.csr_matrix((K * F, self.nd)), sp.identity(K * F)], format="csr")
        ops = [R, Uid]
        offs = [c_rho, np.zeros(K * F)]
        if self.free_end:
            T = sp.hstack(
                [sp.csr_matrix((N, dcol(K))), sp.identity(N), sp.csr_matrix((N, self.n - dcol(K) - N))],
                format="csr",
            )
            ops.append(T)
            offs.append(np.zeros(N))
        self.Kop = sp.vstack(ops, format="csr")
        self.KopT = self.Kop.T.tocsr()
        self.c = np.concatenate(offs)
        self.weights = np.tile(grid.face_weight, K) * self.dt

    def _assemble(self, blocks, nrows):
        mats = []
        for entries in blocks:
            pieces = sorted(entries.items())
            mat = sp.csr_matrix((nrows, self.n))
            for col, block in pieces:
                block = sp.csr_matrix(block)
                pad = sp.hstack(
                    [sp.csr_matrix((nrows, col)), block, sp.csr_matrix((nrows, self.n - col - block.shape[1]))],
                    format="csr",
                )
                mat = mat + pad
            mats.append(mat)
        return sp.vstack(mats, format="csr")

    def project(self, x):
        r = self.A @ x - self.b
        return x - self.A.T @ self._lu.solve(r)

    def residual(self, x):
        return float(np.abs(self.A @ x - self.b).max())

    def norm(self, iters, seed=0):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.n)
        v /= np.linalg.norm(v)
        s = 0.0
        for _ in range(iters):
            w = self.KopT @ (self.Kop @ v)
            s = np.linalg.norm(w)
            v = w / s
        return math.sqrt(s) * 1.01

    def split(self, x):
        d = x[: self.nd].reshape(self.nd_steps, self.N)
        U = x[self.nd:].reshape(self.K, self.F)
        return d, U

    def action(self, x):
        """Action of a feasible iterate; negative face densities count as empty."""
        rho = self.Kop[: self.K * self.F] @ x + self.c[: self.K * self.F]
        U = x[self.nd:]
        pos = rho > 0
        val = np.sum(self.weights[pos] * U[pos] ** 2 / rho[pos])
        return float(val)


def _primal_dual(st, x0, terminal_prox=None, options=None, objective=None):
    """Chambolle-Pock iterations for ``min F(K x + c) + indicator(A x = b)``.

    ``terminal_prox(v, gamma)`` is the proximal map of ``gamma * G`` for the
    terminal block (free end only). ``objective(x)`` is monitored for the
    stopping rule and defaults to the kinetic action.
    """
    opts = options or SolverOptions()
    objective = objective or st.action
    L = st.norm(opts.power_iterations)
    tau = opts.step_safety * opts.theta / L
    sigma = opts.step_safety / (opts.theta * L)
    KF = st.K * st.F
    x = st.project(x0)
    xbar = x.copy()
    y = np.zeros(st.Kop.shape[0])
    last = objective(x)
    history = []
    t0 = time.perf_counter()
    for it in range(1, opts.max_iter + 1):
        y = y + sigma * (st.Kop @ xbar + st.c)
        # Moreau: prox_{sigma F*}(y) = y - sigma prox_{F / sigma}(y / sigma)
        r, U = perspective_prox(y[:KF] / sigma, y[KF:2 * KF] / sigma, st.weights / sigma)
        yr = y[:KF] - sigma * r
        yu = y[KF:2 * KF] - sigma * U
        if terminal_prox is not None:
            yt = y[2 * KF:]
            yt = yt - sigma * terminal_prox(yt / sigma, 1.0 / sigma)
            y = np.concatenate([yr, yu, yt])
        else:
            y = np.concatenate([yr, yu])
        x_new = st.project(x - tau * (st.KopT @ y))
        xbar = 2 * x_new - x
        x = x_new
        if it % opts.check_every == 0:
            val = objective(x)
            change = abs(val - last) / max(abs(val), 1e-12)
            res = st.residual(x)
            history.append((it, val, change, res))
            if opts.verbose:
                print(f"{it:7d}  objective {val:.10g}  change {change:.2e}  residual {res:.2e}")
            if change < opts.tol_action and res < opts.tol_continuity:
                return x, it, history, time.perf_counter() - t0
            last = val
    raise NotConverged(
        f"primal-dual iteration hit {opts.max_iter} iterations",
        {"iterations": opts.max_iter, "objective": last, "history": history[-5:]},
    )


@dataclass
class BBResult:
    path: SpaceTimePath
    action: float
    iterations: int
    seconds: float
    history: list = field(default_factory=list)


def _atom_free(mu, name):
    if mu.has_atoms:
        raise AtomPresent(f"{name} has vertex atoms; regularise it first")


def solve_bb(mu0, mu1, K=32, options=None):
    """Minimal kinetic action between two measures over discrete paths.

    Parameters
    ----------
    mu0, mu1 : GridMeasure
        Atom-free probability measures on the same grid.
    K : int
        Number of time steps on ``[0, 1]``.

    Returns
    -------
    BBResult
        The optimal path (measures at ``k / K``, fluxes on the steps) and its
        action, which approximates the squared Wasserstein distance.
    """
    _atom_free(mu0, "mu0")
    _atom_free(mu1, "mu1")
    if not mu0.grid.same_as(mu1.grid):
        raise GridMismatch("endpoints live on different grids")
    mu0.require_probability()
    mu1.require_probability()
    grid = mu0.grid
    if K < 1:
        raise ValueError("need at least one time step")
    d0 = mu0.densities
    d1 = mu1.densities * (mu0.total_mass / mu1.total_mass)
    times = np.linspace(0.0, 1.0, K + 1)
    if np.array_equal(d0, d1):
        path = SpaceTimePath.constant(mu0, times)
        return BBResult(path, 0.0, 0, 0.0)
    st = _SpaceTime(grid, K, d0, d1)
    x0 = np.zeros(st.n)
    for k in range(1, K):
        t = k / K
        x0[(k - 1) * st.N:k * st.N] = (1 - t) * d0 + t * d1
    x, it, hist, secs = _primal_dual(st, x0, options=options)
    d, U = st.split(x)
    dens = [d0] + list(d) + [d1]
    measures = [GridMeasure(grid, dk * grid.widths, check=False) for dk in dens]
    fluxes = [FluxField(grid, u) for u in U]
    path = SpaceTimePath(times, measures, fluxes)
    return BBResult(path, st.action(x), it, secs, hist)


@dataclass
class RegularizedPath:
    """A path pushed to the extended graph.

    ``path`` carries the smoothed measures with the stretched flux
    ``(alpha J)_eps`` that transports them; ``plain_fluxes`` holds ``J_eps``
    without the stretch factor.
    """

    ext: object
    path: SpaceTimePath
    plain_fluxes: list
    continuity: ContinuityReport


def regularize_path(ext, path):
    """Smooth every measure and flux of a path through ``ext``."""
    if not path.grid.same_as(ext.base_grid):
        raise GridMismatch("path does not live on the extension's base grid")
    measures = [regularize_measure(ext, m) for m in path.measures]
    eg = ext.grid
    fluxes = [FluxField(eg, regularize_flux_values(ext, path.grid, J.values)) for J in path.fluxes]
    plain = [FluxField(eg, regularize_flux_values(ext, path.grid, J.values, weighted=False)) for J in path.fluxes]
    out = SpaceTimePath(path.times.copy(), measures, fluxes)
    return RegularizedPath(ext, out, plain, check_continuity(out))
