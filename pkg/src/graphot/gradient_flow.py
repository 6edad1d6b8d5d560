"""Free-energy gradient flows: McKean-Vlasov solver, JKO scheme, dissipation.

The free energy is the entropy relative to ``exp(-V)`` times length plus
the interaction energy ``1/2 <mu, W mu>``. Writing ``eta`` for the density
of ``mu`` with respect to length and ``rho = eta * exp(V)``, its gradient
flow is

    d_t eta + div J = 0,   J = -(grad rho + rho grad W[mu]) exp(-V),

with ``rho`` continuous through every vertex and Kirchhoff balance of
``J``. The finite-volume scheme keeps one trace unknown of ``rho`` per
vertex and freezes ``W[mu]`` over a step, which makes each implicit step a
single sparse linear solve. The flux is assembled in the equivalent form
``-exp(-V - W) grad(rho exp(W))`` so the step matrix is an M-matrix and
positivity survives for any ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .dynamics import FluxField, SolverOptions, SpaceTimePath, _primal_dual, _SpaceTime, bb_action
from .errors import (
    AtomPresent,
    GridMismatch,
    InfiniteDissipation,
    InfiniteEnergy,
    NonPositiveDt,
    NotConverged,
    SingularSystem,
)
from .measure import (
    GridMeasure,
    entropy,
    free_energy,
    interaction_energy,
    potential_energy,
)

__all__ = [
    "MkvState",
    "DissipationReport",
    "dissipation",
    "LinftyReport",
    "linfty_bound_check",
    "mkv_step",
    "mkv_trajectory",
    "EdeReport",
    "energy_dissipation_check",
    "chain_rule_check",
    "jko_step",
    "jko_flow",
    "JkoOptions",
    "slope_estimate",
    "energy_rows",
]


def _check_grid(mu, potential):
    if not mu.grid.same_as(potential.grid):
        raise GridMismatch("measure and potential live on different grids")


def _face_values(grid, cell_vals, vertex_vals):
    """Cell values averaged to interior faces, vertex values at end faces."""
    nodes = np.concatenate([cell_vals, vertex_vals])
    out = np.empty(grid.n_faces)
    inner = grid.face_vertex < 0
    k = grid.face_edge[inner]
    c = grid.cell_offsets[k] + grid.face_local[inner]
    out[inner] = 0.5 * (nodes[c - 1] + nodes[c])
    out[~inner] = nodes[grid.n_cells + grid.face_vertex[~inner]]
    return out


# ------------------------------------------------------------- states


@dataclass
class MkvState:
    """Cell densities ``eta`` (w.r.t. length), vertex traces of ``rho``, time."""

    grid: object
    eta: np.ndarray
    t: float = 0.0
    vertex_rho: np.ndarray | None = None
    flux: np.ndarray | None = None

    @classmethod
    def from_measure(cls, mu, t=0.0):
        if mu.has_atoms:
            raise AtomPresent("the McKean-Vlasov solver needs an atom-free measure")
        mu.require_probability()
        return cls(mu.grid, mu.densities.copy(), float(t))

    @property
    def measure(self):
        return GridMeasure(self.grid, self.eta * self.grid.widths, check=False)

    def rho(self, potential):
        return self.eta * np.exp(potential.V)

    @property
    def mass(self):
        return float(np.dot(self.eta, self.grid.widths))


class _MkvOperator:
    """Sparse pieces of the implicit step for a fixed grid, ``V`` and ``dt``."""

    def __init__(self, potential, dt):
        grid = potential.grid
        self.grid = grid
        self.potential = potential
        self.dt = dt
        self.N, self.V = grid.n_cells, grid.n_vertices
        self.G = grid.face_gradient
        self.out = sp.vstack([grid.divergence, grid.kirchhoff], format="csr")
        self.mass_diag = np.concatenate(
            [grid.widths * np.exp(-potential.V) / dt, np.zeros(self.V)]
        )
        self._cached = None

    def flux_matrix(self, wfield):
        """``x -> J`` with ``x = [rho cells, rho vertices]``."""
        grid = self.grid
        wf = _face_values(grid, wfield[: self.N], wfield[self.N:])
        M = sp.diags(np.exp(-self.potential.V_faces - wf))
        E = sp.diags(np.exp(wfield))
        return -(M @ self.G @ E)

    def solve(self, eta_old, wfield, reuse):
        if reuse and self._cached is not None:
            lu, Jm = self._cached
        else:
            Jm = self.flux_matrix(wfield)
            A = (sp.diags(self.mass_diag) + self.out @ Jm).tocsc()
            try:
                lu = splu(A)
            except RuntimeError as exc:
                raise SingularSystem(f"implicit step matrix is singular: {exc}") from exc
            if reuse:
                self._cached = (lu, Jm)
        rhs = np.concatenate([self.grid.widths * eta_old / self.dt, np.zeros(self.V)])
        x = lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("implicit step produced non-finite values")
        return x, Jm @ x


def mkv_step(state, potential, dt, _op=None):
    """One implicit Euler step of the McKean-Vlasov equation.

    Parameters
    ----------
    state : MkvState
    potential : Potential
        Confinement ``V`` and kernel ``W``; ``W[mu]`` is frozen at the
        state's measure.
    dt : float

    Returns
    -------
    MkvState
        The new densities, vertex traces of ``rho`` and the flux that
        carried the step (``h (eta' - eta) + dt div J = 0``).
    """
    if not dt > 0:
        raise NonPositiveDt(f"time step must be positive, got {dt!r}")
    if not state.grid.same_as(potential.grid):
        raise GridMismatch("state and potential live on different grids")
    op = _op if _op is not None else _MkvOperator(potential, dt)
    interacting = potential.has_interaction
    wfield = potential.field(state.measure) if interacting else np.zeros(op.N + op.V)
    x, J = op.solve(state.eta, wfield, reuse=not interacting)
    eta = x[: op.N] * np.exp(-potential.V)
    return MkvState(state.grid, eta, state.t + dt, x[op.N:].copy(), J)


def mkv_trajectory(mu0, potential, dt, T, every=1):
    """Run the solver to time ``T`` and return the path of measures and fluxes.

    Every step is recorded unless ``every > 1``, in which case the path keeps
    one snapshot per ``every`` steps together with the time-averaged flux,
    which still satisfies the discrete continuity equation exactly.
    """
    if not dt > 0:
        raise NonPositiveDt(f"time step must be positive, got {dt!r}")
    _check_grid(mu0, potential)
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a multiple of dt")
    op = _MkvOperator(potential, dt)
    state = MkvState.from_measure(mu0)
    times, measures, fluxes = [0.0], [mu0], []
    acc = np.zeros(mu0.grid.n_faces)
    for n in range(1, steps + 1):
        state = mkv_step(state, potential, dt, _op=op)
        acc += state.flux
        if n % every == 0 or n == steps:
            span = n - int(round(times[-1] / dt))
            times.append(n * dt)
            measures.append(state.measure)
            fluxes.append(FluxField(mu0.grid, acc / span))
            acc = np.zeros(mu0.grid.n_faces)
    return SpaceTimePath(np.array(times), measures, fluxes)


# --------------------------------------------------------- dissipation


@dataclass
class DissipationReport:
    """Dissipation ``int |w|^2 dmu`` and the velocity ``w`` at every face."""

    value: float
    velocity: np.ndarray | None
    finite: bool
    continuity_defect: float
    threshold: float
    reason: str = ""


def _traces(grid, rho):
    """One-sided vertex traces of cell values by linear extrapolation.

    Returns a list, per vertex, of the traces of all incident edges.
    """
    out = [[] for _ in range(grid.n_vertices)]
    g = grid.graph
    for k in range(len(grid.counts)):
        c0 = grid.cell_offsets[k]
        c1 = grid.cell_offsets[k + 1] - 1
        if grid.counts[k] >= 2:
            t0 = 1.5 * rho[c0] - 0.5 * rho[c0 + 1]
            t1 = 1.5 * rho[c1] - 0.5 * rho[c1 - 1]
        else:
            t0 = t1 = rho[c0]
        out[g.init_idx[k]].append(t0)
        out[g.term_idx[k]].append(t1)
    return out


def dissipation(mu, potential, include_interaction=True):
    """Discrete dissipation functional of a measure.

    ``rho = eta * exp(V)`` is extended to vertices by one-sided linear
    extrapolation; when the incident traces of some vertex disagree by more
    than ``10 h Lip(rho)`` the measure is treated as discontinuous there and
    the dissipation is infinite. Otherwise the vertex value is the mean of
    the traces,

        w = (grad rho + rho_f grad W[mu]) / rho_f,
        I = sum_f |f| w^2 rho_f exp(-V_f),

    with ``rho_f`` the face mean and ``|f|`` the dual face width.
    ``include_interaction=False`` gives the variant without ``W``.
    """
    _check_grid(mu, potential)
    grid = mu.grid
    if mu.has_atoms:
        return DissipationReport(math.inf, None, False, math.inf, 0.0, "atoms")
    rho = mu.densities * np.exp(potential.V)
    traces = _traces(grid, rho)
    inner = grid.face_vertex < 0
    k = grid.face_edge[inner]
    c = grid.cell_offsets[k] + grid.face_local[inner]
    jumps = np.abs(rho[c] - rho[c - 1]) / grid.edge_h[k]
    lip = float(jumps.max(initial=0.0))
    threshold = 10.0 * grid.h_max * lip
    defect = max((max(t) - min(t) for t in traces if len(t) > 1), default=0.0)
    vertex_rho = np.array([np.mean(t) for t in traces])
    if defect > threshold:
        return DissipationReport(math.inf, None, False, defect, threshold, "discontinuous at a vertex")
    vertex_rho = np.maximum(vertex_rho, 0.0)

    grad = grid.face_gradient @ np.concatenate([rho, vertex_rho])
    rho_f = _face_values(grid, rho, vertex_rho)
    # end faces: mean of the boundary cell and the vertex value
    ends = ~inner
    kk = grid.face_edge[ends]
    cells = np.where(
        grid.face_local[ends] == 0,
        grid.cell_offsets[kk],
        grid.cell_offsets[kk + 1] - 1,
    )
    rho_f[ends] = 0.5 * (rho[cells] + vertex_rho[grid.face_vertex[ends]])
    top = grad.copy()
    if include_interaction and potential.has_interaction:
        wgrad = grid.face_gradient @ potential.field(mu)
        top = top + rho_f * wgrad
    pos = rho_f > 0
    if np.any(~pos & (np.abs(top) > 0)):
        return DissipationReport(math.inf, None, False, defect, threshold, "gradient on an empty face")
    w = np.zeros(grid.n_faces)
    w[pos] = top[pos] / rho_f[pos]
    value = float(np.sum(grid.face_weight * w**2 * rho_f * np.exp(-potential.V_faces)))
    return DissipationReport(value, w, True, defect, threshold)


@dataclass
class LinftyReport:
    sup_rho: float
    sqrt_I0: float
    ratio: float
    constant: float
    bound: float
    holds: bool
    regime: str


def linfty_bound_check(mu, potential):
    """Compare ``sup rho`` with the Sobolev-type bound through ``I_0``.

    The constant is ``A = exp(|V|_inf) * max_e (1/l_e + 1)``. On an edge,
    ``sup rho <= exp(|V|_inf) (1/l_e + sqrt(I_0))`` by the one-dimensional
    embedding of W^{1,1} and Cauchy-Schwarz, so ``sup rho <= A sqrt(I_0)``
    follows once ``I_0 >= 1``. Below that the reported bound is
    ``A * max(1, sqrt(I_0))`` and the regime says so.
    """
    rep = dissipation(mu, potential, include_interaction=False)
    if not rep.finite:
        raise InfiniteDissipation(f"I_0 is infinite ({rep.reason})")
    rho = mu.densities * np.exp(potential.V)
    sup_rho = float(rho.max())
    s = math.sqrt(rep.value)
    A = math.exp(potential.V_sup) * float(np.max(1.0 / mu.grid.graph.lengths + 1.0))
    ratio = sup_rho / s if s > 0 else math.inf
    if s == 0:
        regime = "zero dissipation: bound vacuous"
    elif s < 1:
        regime = "I_0 < 1: compared against A"
    else:
        regime = "I_0 >= 1"
    bound = A * max(1.0, s)
    return LinftyReport(sup_rho, s, ratio, A, bound, sup_rho <= bound, regime)


# ----------------------------------------------- energy dissipation check


@dataclass
class EdeReport:
    value: float
    energy_drop: float
    action: float
    dissipation: float
    energies: np.ndarray = field(repr=False, default=None)
    dissipations: np.ndarray = field(repr=False, default=None)
    actions: np.ndarray = field(repr=False, default=None)


def energy_dissipation_check(path, potential):
    """Energy-dissipation defect of a discrete path.

    ``L_T = F(mu_T) - F(mu_0) + 1/2 sum_n dt_n (A_n + I(mu_{n+1}))`` where
    ``A_n`` is the kinetic action of the step's flux against the measure
    at the step's end (the point where an implicit step is evaluated) and
    ``I`` the dissipation. Nonnegative up to discretisation error for any
    path; close to zero along the gradient flow.
    """
    if not path.grid.same_as(potential.grid):
        raise GridMismatch("path and potential live on different grids")
    F = np.array([free_energy(m, potential) for m in path.measures])
    if not math.isfinite(F[0]):
        raise InfiniteEnergy("initial free energy is infinite")
    dts = np.diff(path.times)
    acts = np.array([bb_action(path.measures[n + 1], J).value for n, J in enumerate(path.fluxes)])
    diss = np.array([dissipation(m, potential).value for m in path.measures])
    A = float(np.dot(dts, acts))
    I = float(np.dot(dts, diss[1:]))
    drop = float(F[-1] - F[0])
    return EdeReport(drop + 0.5 * (A + I), drop, A, I, F, diss, acts)


def chain_rule_check(path, potential, t_min=0.0):
    """``max_n |(F_{n+1} - F_n)/dt - sum_f |f| w_f J_f|`` along a path.

    ``w`` is the dissipation velocity, averaged over the two ends of the
    step; weighted against the step's flux it is the rate of change of the
    free energy. Only steps starting at ``t >= t_min`` are sampled, which
    skips the initial layer where the dissipation changes too fast for
    any finite step.
    """
    F = np.array([free_energy(m, potential) for m in path.measures])
    grid = path.grid
    reps = [dissipation(m, potential) for m in path.measures]
    if not all(r.finite for r in reps):
        return math.inf
    worst = 0.0
    for n, J in enumerate(path.fluxes):
        if path.times[n] < t_min:
            continue
        dt = path.times[n + 1] - path.times[n]
        w = 0.5 * (reps[n].velocity + reps[n + 1].velocity)
        rate = float(np.sum(grid.face_weight * w * J.values))
        worst = max(worst, abs((F[n + 1] - F[n]) / dt - rate))
    return worst


def energy_rows(path, potential):
    """(t, F, Ent, V-energy, W-energy, I) per snapshot."""
    rows = []
    for t, m in zip(path.times, path.measures):
        rows.append(
            (
                float(t),
                free_energy(m, potential),
                entropy(m),
                potential_energy(m, potential),
                interaction_energy(m, potential),
                dissipation(m, potential).value,
            )
        )
    return rows


# ------------------------------------------------------------------ JKO


@dataclass
class JkoOptions:
    """Inner solver of a minimising-movement step."""

    K_inner: int = 4
    solver: SolverOptions = field(
        default_factory=lambda: SolverOptions(tol_action=1e-9, tol_continuity=1e-10, check_every=50, theta=30.0)
    )


def _log_lambert(L):
    """Solve ``y + exp(y) = L`` elementwise (``exp(y)`` is Lambert W of ``e^L``)."""
    L = np.asarray(L, dtype=float)
    y = np.where(L > 1.0, np.log(np.maximum(L, 1.0)), L)
    for _ in range(100):
        ey = np.exp(y)
        step = (y + ey - L) / (1.0 + ey)
        y = y - step
        if np.all(np.abs(step) <= 1e-14 * (1.0 + np.abs(y))):
            break
    return y


def _entropy_prox(h, c, scale):
    """Proximal map of ``gamma * scale * sum h_i (d log d + c_i d)``."""

    def prox(v, gamma):
        beta = gamma * scale * h
        L = v / beta - 1.0 - c - np.log(beta)
        return beta * np.exp(_log_lambert(L))

    return prox


def _jko_objective(nu, potential, action, tau):
    return free_energy(nu, potential) + action / (2.0 * tau)


def jko_step(mu, tau, potential, options=None):
    """One minimising-movement step ``argmin F(nu) + W_2(nu, mu)^2 / (2 tau)``.

    The transport cost is the discrete kinetic action over ``K_inner``
    internal steps, and the terminal density pays ``2 tau F`` with the
    interaction energy linearised at ``mu``. The solver's candidate is
    accepted only if its objective does not exceed ``F(mu)`` (the objective
    of staying put); otherwise ``mu`` is returned.

    Returns
    -------
    (GridMeasure, dict)
        The new measure and diagnostics (objective, action, iterations,
        whether the candidate was accepted).
    """
    if not tau > 0:
        raise NonPositiveDt(f"tau must be positive, got {tau!r}")
    _check_grid(mu, potential)
    if mu.has_atoms:
        raise AtomPresent("JKO steps need an atom-free measure")
    mu.require_probability()
    F0 = free_energy(mu, potential)
    if not math.isfinite(F0):
        raise InfiniteEnergy("free energy of the start measure is infinite")
    opts = options or JkoOptions()
    grid = mu.grid
    d0 = mu.densities
    st = _SpaceTime(grid, opts.K_inner, d0)
    c = potential.V.copy()
    if potential.has_interaction:
        c = c + potential.field(mu)[: grid.n_cells]
    prox = _entropy_prox(grid.widths, c, 2.0 * tau)
    x0 = np.concatenate([np.tile(d0, opts.K_inner), np.zeros(st.nu)])
    def objective(x):
        d = x[st.nd - st.N: st.nd]
        dpos = np.maximum(d, 1e-300)
        term = float(np.sum(grid.widths * d * (np.log(dpos) + c)))
        return st.action(x) + 2.0 * tau * term

    x, it, hist, _ = _primal_dual(st, x0, terminal_prox=prox, options=opts.solver, objective=objective)
    d, _U = st.split(x)
    dK = np.maximum(d[-1], 0.0)
    nu = GridMeasure(grid, dK * grid.widths)
    nu = GridMeasure(grid, nu.masses / nu.total_mass)
    action = st.action(x)
    obj = _jko_objective(nu, potential, action, tau)
    accepted = obj <= F0
    info = {"objective": obj, "action": action, "iterations": it, "accepted": accepted, "F0": F0}
    return (nu if accepted else mu), info


def jko_flow(mu0, tau, steps, potential, options=None):
    """Iterate :func:`jko_step`; returns the measures and per-step diagnostics."""
    out = [mu0]
    infos = []
    mu = mu0
    for _ in range(int(steps)):
        mu, info = jko_step(mu, tau, potential, options)
        out.append(mu)
        infos.append(info)
    return out, infos


def slope_estimate(mu, potential, taus=(1e-3, 5e-4), options=None):
    """Diagnostic slope from the Moreau-Yosida gap of short JKO steps.

    ``sqrt(2 (F(mu) - min_nu [F(nu) + W^2/(2 tau)]) / tau)`` for each tau;
    the largest value is returned with the dissipation's square root for
    comparison. Not a certified estimator.
    """
    F0 = free_energy(mu, potential)
    vals = []
    for tau in taus:
        try:
            _, info = jko_step(mu, tau, potential, options)
        except NotConverged:
            continue
        gap = max(F0 - min(info["objective"], F0), 0.0)
        vals.append(math.sqrt(2.0 * gap / tau))
    I = dissipation(mu, potential).value
    return (max(vals) if vals else math.nan), math.sqrt(I)

