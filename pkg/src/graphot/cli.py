"""Command line entry point ``graphot``.

Every subcommand takes its options on the command line or from a JSON
config (``--config``) whose keys are the long option names with dashes
replaced by underscores; command-line values win. A JSON run report with
every checked assertion goes next to the outputs, and the exit code is 0
exactly when all assertions pass (1 on a failed assertion, 2 on invalid
input).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from .dynamics import FluxField, SolverOptions, SpaceTimePath, flux_between, solve_bb
from .errors import ConfigInvalid, GraphotError, NotConverged, SubcommandUnknown
from .graph import build_graph
from .gradient_flow import (
    MkvState,
    energy_dissipation_check,
    energy_rows,
    jko_flow,
    _MkvOperator,
    mkv_step,
)
from .measure import Grid, GridMeasure, Potential, free_energy
from .regularize import ExtendedGraph, regularize_measure
from .report import Assertion, RunReport, write_csv
from .suites import SUITES, run_example_4_1, run_suite
from .transport import verify_hopf_lax_properties, wasserstein, hopf_lax

__all__ = ["main", "build_parser"]


# ------------------------------------------------------------- inputs


def _read_json(path, what):
    p = Path(path)
    if not p.is_file():
        raise ConfigInvalid(f"{what} file {path} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{what} file {path} is not valid JSON: {exc}") from exc


def _graph(args):
    if not args.graph:
        raise ConfigInvalid("--graph is required")
    return build_graph(_read_json(args.graph, "graph"))


def _positive(name, value):
    if value is None or not (value > 0) or not math.isfinite(value):
        raise ConfigInvalid(f"{name} must be positive, got {value!r}")
    return value


def _grid(args, g):
    return Grid.from_width(g, _positive("h", args.h))


def _measure(grid, path, what):
    return GridMeasure.from_spec(grid, _read_json(path, what))


def _potential(grid, args):
    vspec = _read_json(args.V, "V") if getattr(args, "V", None) else None
    wspec = _read_json(args.W, "W") if getattr(args, "W", None) else None
    return Potential.from_spec(grid, vspec, wspec)


def _seed(args):
    env = os.environ.get("GRAPHOT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigInvalid(f"GRAPHOT_SEED={env!r} is not an integer") from exc
    return int(getattr(args, "seed", 0) or 0)


def _outdir(args):
    out = Path(args.out).parent if getattr(args, "out", None) else Path(getattr(args, "outdir", None) or ".")
    return out


def _cell_rows(grid):
    """(edge id, local cell index) per cell."""
    g = grid.graph
    local = np.arange(grid.n_cells) - grid.cell_offsets[grid.cell_edge]
    return [(g.edges[k].id, int(j)) for k, j in zip(grid.cell_edge, local)]


def _cell_flux(grid, J):
    """Face fluxes averaged to cell centres."""
    left = grid.face_offsets[grid.cell_edge] + (np.arange(grid.n_cells) - grid.cell_offsets[grid.cell_edge])
    return 0.5 * (J[left] + J[left + 1])


# ------------------------------------------------------------ commands


def cmd_wasserstein(args):
    g = _graph(args)
    grid = _grid(args, g)
    mu = _measure(grid, args.mu, "mu")
    nu = _measure(grid, args.nu, "nu")
    res = wasserstein(g, mu, nu, p=args.p)
    rep = RunReport("wasserstein", vars_config(args))
    x, y = res.plan.source, res.plan.target
    rows = [
        (g.edges[x.edges[i]].id, float(x.s[i]), g.edges[y.edges[j]].id, float(y.s[j]), float(m))
        for i, j, m in zip(res.plan.rows, res.plan.cols, res.plan.mass)
    ]
    if args.out:
        rep.outputs.append(write_csv(args.out, ["src_edge", "src_s", "dst_edge", "dst_s", "mass"], rows))
    rep.extend(
        [
            Assertion.at_most("wasserstein.gap", "LP duality gap", abs(res.duality_gap), args.gap_tol),
            Assertion.at_most("wasserstein.dual", "dual constraint violation", res.dual_infeasibility, args.gap_tol),
        ]
    )
    rep.notes.update({"value": res.value, "cost": res.cost, "duality_gap": res.duality_gap})
    print(f"W_{args.p} = {res.value:.12g}  (cost {res.cost:.12g}, duality gap {res.duality_gap:.3g})")
    return rep


def cmd_bb_solve(args):
    g = _graph(args)
    grid = _grid(args, g)
    mu0 = _measure(grid, args.mu0, "mu0")
    mu1 = _measure(grid, args.mu1, "mu1")
    opts = SolverOptions(max_iter=args.max_iter, theta=args.theta, verbose=args.verbose)
    res = solve_bb(mu0, mu1, args.steps, opts)
    rep = RunReport("bb-solve", vars_config(args))
    cells = _cell_rows(grid)
    rows = []
    for k, (t, m) in enumerate(zip(res.path.times, res.path.measures)):
        flux = _cell_flux(grid, res.path.fluxes[k].values) if k < res.path.steps else np.full(grid.n_cells, np.nan)
        rows += [(float(t), e, j, float(d), float(f)) for (e, j), d, f in zip(cells, m.densities, flux)]
    if args.out:
        rep.outputs.append(write_csv(args.out, ["t", "edge", "cell", "density", "flux"], rows))
    static = wasserstein(g, mu0, mu1).cost
    rep.notes.update({"action": res.action, "static_W2_squared": static, "iterations": res.iterations})
    if args.compare_tol is not None:
        rep.extend(
            [
                Assertion.at_most(
                    "bb.gap", "relative gap to static W_2^2", abs(res.action - static) / static, args.compare_tol
                )
            ]
        )
    print(f"action {res.action:.10g}  static W_2^2 {static:.10g}  iterations {res.iterations}")
    return rep


def _traj_rows(grid, pot, t, eta, flux):
    rho = eta * np.exp(pot.V)
    f = _cell_flux(grid, flux) if flux is not None else np.full(grid.n_cells, np.nan)
    return [(float(t), e, j, float(a), float(r), float(q)) for (e, j), a, r, q in zip(_cell_rows(grid), eta, rho, f)]


def _write_energy(path, rows):
    return write_csv(path, ["t", "F", "Ent", "V_energy", "W_energy", "I"], rows)


def cmd_mkv(args):
    g = _graph(args)
    grid = _grid(args, g)
    pot = _potential(grid, args)
    mu0 = _measure(grid, args.init, "init")
    dt = _positive("dt", args.dt)
    T = _positive("T", args.T)
    steps = int(round(T / dt))
    every = max(1, int(args.every))
    op = _MkvOperator(pot, dt)
    state = MkvState.from_measure(mu0)
    rows = _traj_rows(grid, pot, 0.0, state.eta, None)
    times, measures, fluxes = [0.0], [mu0], []
    worst_mass = 0.0
    acc = np.zeros(grid.n_faces)
    for n in range(1, steps + 1):
        m0 = state.mass
        state = mkv_step(state, pot, dt, _op=op)
        worst_mass = max(worst_mass, abs(state.mass - m0))
        acc += state.flux
        if n % every == 0 or n == steps:
            span = n - int(round(times[-1] / dt))
            J = acc / span
            acc = np.zeros(grid.n_faces)
            times.append(n * dt)
            measures.append(state.measure)
            fluxes.append(FluxField(grid, J))
            rows += _traj_rows(grid, pot, n * dt, state.eta, J)
    path = SpaceTimePath(np.array(times), measures, fluxes)
    rep = RunReport("mkv", vars_config(args))
    if args.out:
        rep.outputs.append(write_csv(args.out, ["t", "edge", "cell", "eta", "rho", "flux"], rows))
        rep.outputs.append(_write_energy(Path(args.out).with_name(Path(args.out).stem + "_energy.csv"), energy_rows(path, pot)))
    F = np.array([free_energy(m, pot) for m in measures])
    rep.extend(
        [
            Assertion.at_most("mkv.mass", "largest mass change per step", worst_mass, 1e-10),
            Assertion.at_least("mkv.positivity", "smallest density", float(state.eta.min()), 0.0),
        ]
    )
    if not pot.has_interaction:
        rep.extend([Assertion.holds("mkv.energy", "free energy non-increasing", bool(np.all(np.diff(F) <= 1e-12)))])
    print(f"T = {T:g}: F = {F[-1]:.10g}  mass drift {worst_mass:.2g}")
    return rep


def cmd_jko(args):
    g = _graph(args)
    grid = _grid(args, g)
    pot = _potential(grid, args)
    mu0 = _measure(grid, args.init, "init")
    tau = _positive("tau", args.tau)
    ms, infos = jko_flow(mu0, tau, args.steps, pot)
    rows = []
    for n, m in enumerate(ms):
        rows += _traj_rows(grid, pot, n * tau, m.densities, None)
    rep = RunReport("jko", vars_config(args))
    if args.out:
        rep.outputs.append(write_csv(args.out, ["t", "edge", "cell", "eta", "rho", "flux"], rows))
    F = np.array([free_energy(m, pot) for m in ms])
    rep.extend([Assertion.holds("jko.monotone", "free energy non-increasing", bool(np.all(np.diff(F) <= 0)))])
    rep.notes.update({"F": F.tolist(), "accepted": [bool(i["accepted"]) for i in infos]})
    print(f"{args.steps} steps: F from {F[0]:.10g} to {F[-1]:.10g}")
    return rep


def read_trajectory(path, grid):
    """Measures from a trajectory CSV (eta per cell, one block per time)."""
    by_t = defaultdict(dict)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_t[float(row["t"])][(row["edge"], int(row["cell"]))] = float(row["eta"])
    cells = _cell_rows(grid)
    times = sorted(by_t)
    measures = []
    for t in times:
        block = by_t[t]
        try:
            eta = np.array([block[c] for c in cells])
        except KeyError as exc:
            raise ConfigInvalid(f"trajectory at t={t} misses cell {exc}; does --h match the run?") from exc
        measures.append(GridMeasure(grid, eta * grid.widths, check=False))
    return np.array(times), measures


def cmd_ede_check(args):
    g = _graph(args)
    grid = _grid(args, g)
    pot = _potential(grid, args)
    times, measures = read_trajectory(args.traj, grid)
    if len(times) < 2:
        raise ConfigInvalid("trajectory needs at least two times")
    fluxes = [flux_between(a, b, t1 - t0) for a, b, t0, t1 in zip(measures, measures[1:], times, times[1:])]
    path = SpaceTimePath(times, measures, fluxes)
    r = energy_dissipation_check(path, pot)
    rep = RunReport("ede-check", vars_config(args))
    rep.notes.update({"L_T": r.value, "energy_drop": r.energy_drop, "action": r.action, "dissipation": r.dissipation})
    if args.expect_flow:
        rep.extend([Assertion.at_most("ede.flow", "|L_T| along a gradient flow", abs(r.value), args.tol)])
    else:
        rep.extend([Assertion.at_least("ede.sign", "L_T is nonnegative up to tolerance", r.value, -args.tol)])
    if args.energy_out:
        rep.outputs.append(_write_energy(args.energy_out, energy_rows(path, pot)))
    print(
        f"L_T = {r.value:.6g}  (F_T - F_0 = {r.energy_drop:.6g}, action {r.action:.6g}, dissipation {r.dissipation:.6g})"
    )
    return rep


def cmd_hopf_lax(args):
    g = _graph(args)
    grid = _grid(args, g)
    spec = _read_json(args.f, "f")
    pot = Potential.from_spec(grid, spec)
    f = pot.nodal_values()
    times = [float(t) for t in args.times]
    rep_hl = verify_hopf_lax_properties(grid, f, times, dt=args.dt)
    rep = RunReport("hopf-lax", vars_config(args))
    h = grid.h_max
    rep.extend(
        [
            Assertion.at_most("hl.lipschitz", "Lip(Q_t f)/Lip(f)", rep_hl.max_lip_ratio, 2 * (1 + 5 * h)),
            Assertion.at_most("hl.hj", "Hamilton-Jacobi residual", rep_hl.max_hj_residual, rep_hl.tolerance),
        ]
    )
    rep.notes.update({"forward_residual": rep_hl.max_hj_forward_residual, "excluded": rep_hl.excluded})
    if args.out:
        pts = grid.support_points()
        rows = []
        for t in times:
            q = hopf_lax(grid, f, t)
            rows += [(t, p.edge, float(p.s), float(v)) for p, v in zip(pts, q)]
        rep.outputs.append(write_csv(args.out, ["t", "edge", "s", "Q"], rows))
    print(f"Lip ratio {rep_hl.max_lip_ratio:.4g}, HJ residual {rep_hl.max_hj_residual:.3g} (budget {rep_hl.tolerance:.3g})")
    return rep


def cmd_regularize(args):
    g = _graph(args)
    grid = _grid(args, g)
    mu = _measure(grid, args.mu, "mu")
    eps = _positive("eps", args.eps)
    if 2 * eps >= g.lengths.min():
        raise ConfigInvalid(f"2*eps={2 * eps} must be below the shortest edge {g.lengths.min()}")
    ext = ExtendedGraph(grid, eps)
    reg = regularize_measure(ext, mu)
    rep = RunReport("regularize", vars_config(args))
    if args.out:
        rep.outputs.append(write_csv(args.out, ["edge", "center", "density"], reg.to_rows()))
    rep.extend(
        [
            Assertion.close("reg.mass", "mass of the smoothed measure", reg.total_mass, mu.total_mass, 1e-12),
            Assertion.at_most("reg.density", "largest smoothed density", float(reg.densities.max()), 1 / (2 * eps) + grid.h_max),
        ]
    )
    print(f"smoothed mass {reg.total_mass:.15g}, max density {reg.densities.max():.6g}")
    return rep


def cmd_example(args):
    outdir = Path(args.outdir)
    rep = run_example_4_1(args.eps, args.h, n_t=args.n_t, outdir=outdir)
    for line in rep.summary_lines():
        print(line)
    return rep


def cmd_suite(args):
    if args.name not in SUITES:
        raise SubcommandUnknown(f"unknown suite {args.name!r}; choose from {sorted(SUITES)}")
    rep = run_suite(args.name, outdir=Path(args.outdir), jobs=args.jobs, seed=_seed(args))
    for line in rep.summary_lines():
        print(line)
    return rep


def vars_config(args):
    skip = {"func", "config", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# -------------------------------------------------------------- parser


def build_parser():
    ap = argparse.ArgumentParser(prog="graphot", description="Optimal transport and gradient flows on metric graphs.")
    sub = ap.add_subparsers(dest="command")

    def common(p, graph=True, h=0.01):
        p.add_argument("--config", help="JSON file with default option values")
        if graph:
            p.add_argument("--graph", help="graph JSON")
            p.add_argument("--h", type=float, default=h, help="target cell width")
        p.add_argument("--report", help="where to write the JSON run report")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("wasserstein", help="exact W_p between two measures")
    common(p)
    p.add_argument("--mu", required=False)
    p.add_argument("--nu", required=False)
    p.add_argument("--p", type=int, default=2, choices=[1, 2])
    p.add_argument("--out", help="plan CSV")
    p.add_argument("--gap-tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_wasserstein)

    p = sub.add_parser("bb-solve", help="dynamic transport by the primal-dual solver")
    common(p)
    p.add_argument("--mu0")
    p.add_argument("--mu1")
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--theta", type=float, default=10.0)
    p.add_argument("--compare-tol", type=float, default=None, help="assert the relative gap to static W_2^2")
    p.add_argument("--out", help="path CSV")
    p.set_defaults(func=cmd_bb_solve)

    for name, helptext in (("mkv", "McKean-Vlasov finite-volume solver"), ("jko", "minimising-movement scheme")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--init")
        p.add_argument("--V")
        p.add_argument("--W")
        p.add_argument("--out", help="trajectory CSV")
        if name == "mkv":
            p.add_argument("--dt", type=float, default=1e-3)
            p.add_argument("--T", type=float, default=1.0)
            p.add_argument("--every", type=int, default=1, help="record every n-th step")
            p.set_defaults(func=cmd_mkv)
        else:
            p.add_argument("--tau", type=float, default=0.01)
            p.add_argument("--steps", type=int, default=10)
            p.set_defaults(func=cmd_jko)

    p = sub.add_parser("ede-check", help="energy-dissipation defect of a trajectory CSV")
    common(p)
    p.add_argument("--traj")
    p.add_argument("--V")
    p.add_argument("--W")
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--expect-flow", action="store_true", help="assert |L_T| <= tol instead of L_T >= -tol")
    p.add_argument("--energy-out", help="energy CSV")
    p.set_defaults(func=cmd_ede_check)

    p = sub.add_parser("hopf-lax", help="Hopf-Lax semigroup and its checks")
    common(p)
    p.add_argument("--f", help="function JSON (same kinds as a potential V)")
    p.add_argument("--times", nargs="+", default=["0.1", "0.5", "1.0"])
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--out", help="CSV of Q_t f at grid nodes")
    p.set_defaults(func=cmd_hopf_lax)

    p = sub.add_parser("regularize", help="smooth a measure through the extended graph")
    common(p)
    p.add_argument("--mu")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--out", help="CSV of the smoothed measure")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("example-4-1", help="entropy along the three-star geodesic")
    common(p, graph=False)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--n-t", type=int, default=1001)
    p.add_argument("--outdir", default="out")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("suite", help="run a named suite (" + ", ".join(sorted(SUITES)) + ")")
    common(p, graph=False)
    p.add_argument("name")
    p.add_argument("--outdir", default="out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_suite)
    return ap


def _apply_config(ap, argv):
    """Parse twice: config values become defaults, explicit flags override them."""
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        cfg = _read_json(args.config, "config")
        if not isinstance(cfg, dict):
            raise ConfigInvalid("config must be a JSON object")
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = ap.parse_args(argv)
    return args


def main(argv=None):
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        ap.print_help()
        return 2
    try:
        args = _apply_config(ap, argv)
        if args.command is None:
            ap.print_help()
            return 2
        start = time.perf_counter()
        rep = args.func(args)
        rep.wall_time = rep.wall_time or time.perf_counter() - start
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GraphotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report_path = args.report or (_outdir(args) / f"{args.command}_report.json")
    rep.write(report_path)
    failed = [a for a in rep.all_assertions() if not a.passed]
    for a in failed:
        print(a.line(), file=sys.stderr)
    print(f"{len(rep.all_assertions()) - len(failed)}/{len(rep.all_assertions())} assertions passed; report {report_path}")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
