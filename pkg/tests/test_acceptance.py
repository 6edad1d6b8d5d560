"""Acceptance criteria 1 to 10, each at its stated tolerance.

Every test prints exactly one ``ACCEPTANCE n: PASS|FAIL`` line (outside
pytest's capture) and then asserts the same outcome.
"""

import shutil
import subprocess
import sys
import time

from graphot.suites import (
    bb_vs_static,
    dissipation_suite,
    ede_suite,
    hopf_lax_suite,
    jko_suite,
    mkv_suite,
    regularization_suite,
    run_example_4_1,
    static_example_check,
)


def _verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} | {detail}", flush=True)
    return ok


def _failed_lines(rep):
    return "; ".join(a.line() for a in rep.all_assertions() if not a.passed)


def _measured(rep, id_):
    return next(a.measured for a in rep.all_assertions() if a.id == id_)


def test_criterion_1_example_entropy(capsys, tmp_path):
    start = time.perf_counter()
    rep = run_example_4_1(eps=0.1, h=1e-3, outdir=tmp_path, plateau_tol=1e-6, kink_tol=1e-3, affine_tol=1e-3)
    secs = time.perf_counter() - start
    ok = rep.passed and secs < 30.0
    detail = (
        f"Ent(mu_0)={_measured(rep, 'ex41.plateau0'):.9f} Ent(mu_1)={_measured(rep, 'ex41.plateau1'):.9f} "
        f"kinks=({_measured(rep, 'ex41.kink0'):.6f}, {_measured(rep, 'ex41.kink1'):.6f}) "
        f"affine dev={_measured(rep, 'ex41.affine'):.2e} time={secs:.1f}s (< 30)"
    )
    assert _verdict(capsys, 1, ok, detail if ok else detail + " " + _failed_lines(rep))


def test_criterion_2_static_w2(capsys):
    rep = static_example_check(eps=0.1, h=0.01)
    detail = (
        f"W2={_measured(rep, 'static.W2'):.6f} (1.9 +- 0.02) gap={_measured(rep, 'static.gap'):.1e} "
        f"halves=({_measured(rep, 'static.half-e1'):.4f}, {_measured(rep, 'static.half-e2'):.4f})"
    )
    assert _verdict(capsys, 2, rep.passed, detail if rep.passed else detail + " " + _failed_lines(rep))


def test_criterion_3_benamou_brenier(capsys):
    rep = bb_vs_static(seeds=(0, 1, 2, 3, 4), h=0.01, K=32, tol=0.02, include_example=True)
    parts = []
    for c in rep.children:
        name = c.command.split(":", 1)[1]
        gap = next(a.measured for a in c.assertions if a.id.endswith(".gap"))
        parts.append(f"{name} gap={100 * gap:.2f}% t={c.wall_time:.0f}s")
    assert _verdict(capsys, 3, rep.passed, "; ".join(parts) + " (tol 2%, 300 s)")


def test_criterion_4_regularization(capsys):
    rep = regularization_suite(n=20, seed=0)
    detail = (
        f"mass={_measured(rep, 'reg.mass'):.1e} density excess={_measured(rep, 'reg.density'):.3g} "
        f"kinetic excess={_measured(rep, 'reg.kinetic'):.3g} duality={_measured(rep, 'reg.duality'):.1e}"
    )
    assert _verdict(capsys, 4, rep.passed, detail)


def test_criterion_5_hopf_lax(capsys):
    rep = hopf_lax_suite(n=10, seed=0, h=0.01)
    detail = (
        f"Lip margin={_measured(rep, 'hl.lipschitz'):.3g} (<= 0) HJ margin={_measured(rep, 'hl.hj'):.3g} (<= 0)"
    )
    assert _verdict(capsys, 5, rep.passed, detail)


def test_criterion_6_mckean_vlasov(capsys):
    rep = mkv_suite(h=0.01, dt=1e-3, T=5.0)
    detail = (
        f"mass={_measured(rep, 'mkv.mass'):.1e} Gibbs step={_measured(rep, 'mkv.gibbs-step'):.1e} "
        f"L1 at T=5={_measured(rep, 'mkv.long-time'):.1e}"
    )
    assert _verdict(capsys, 6, rep.passed, detail)


def test_criterion_7_energy_dissipation(capsys):
    rep = ede_suite(h=0.01, dt=1e-3, T=0.5)
    detail = (
        f"|L_T|={_measured(rep, 'ede.heat'):.4f} (<= 0.05) halving ratio={_measured(rep, 'ede.refine'):.3f} "
        f"(0.5 +- 30%) transported L_T={_measured(rep, 'ede.transport'):.3g} (>= 0.1)"
    )
    assert _verdict(capsys, 7, rep.passed, detail)


def test_criterion_8_jko_vs_pde(capsys):
    rep = jko_suite(tau=0.01, T=0.1)
    detail = (
        f"L1={_measured(rep, 'jko.pde'):.4f} (<= 0.05) monotone={bool(_measured(rep, 'jko.monotone'))} "
        f"monotone with V={bool(_measured(rep, 'jko.monotone-V'))}"
    )
    assert _verdict(capsys, 8, rep.passed, detail)


def test_criterion_9_dissipation(capsys):
    rep = dissipation_suite(h=0.01, n=10, seed=0)
    detail = (
        f"I(Gibbs)={_measured(rep, 'diss.gibbs'):.1e} uniform ratio={_measured(rep, 'diss.uniform'):.5f} "
        f"max sup(rho)/sqrt(I_0)/A={_measured(rep, 'diss.linfty'):.3f} (<= 1)"
    )
    assert _verdict(capsys, 9, rep.passed, detail)


def test_criterion_10_reproduction_suite(capsys, tmp_path):
    exe = shutil.which("graphot")
    cmd = [exe] if exe else [sys.executable, "-m", "graphot.cli"]
    start = time.perf_counter()
    try:
        out = subprocess.run(
            cmd + ["suite", "paper-repro", "--outdir", str(tmp_path)], capture_output=True, text=True, timeout=1200
        )
        rc = out.returncode
        tail = out.stdout.strip().splitlines()[-1] if out.stdout.strip() else out.stderr.strip()
    except subprocess.TimeoutExpired:
        rc, tail = None, "timed out"
    secs = time.perf_counter() - start
    ok = rc == 0 and secs < 1200
    assert _verdict(capsys, 10, ok, f"exit code {rc}, {secs:.0f}s (< 1200): {tail}")

