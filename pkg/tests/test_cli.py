import json
import shutil
import subprocess

import pytest

from graphot import Grid, build_graph
from graphot.cli import main, read_trajectory

STAR = {
    "vertices": ["a", "b", "c", "d"],
    "edges": [
        {"id": "e1", "init": "a", "term": "c", "length": 1},
        {"id": "e2", "init": "b", "term": "c", "length": 1},
        {"id": "f", "init": "c", "term": "d", "length": 1},
    ],
}


@pytest.fixture
def files(tmp_path):
    def put(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return str(p)

    return {
        "dir": tmp_path,
        "graph": put("g.json", STAR),
        "mu": put("mu.json", {"edges": {"e1": [[0, 0.1, 5]], "e2": [[0, 0.1, 5]]}}),
        "nu": put("nu.json", {"edges": {"f": [[0.9, 1, 10]]}}),
        "init": put("init.json", {"edges": {"e1": [[0.2, 0.8, 1.0]], "e2": [[0.2, 0.8, 0.5]], "f": [[0, 1, 0.7]]}, "normalize": True}),
        "V": put("v.json", {"kind": "edge_polynomial", "coeffs": {"f": [0, 0.5]}}),
        "put": put,
    }


def test_wasserstein_command(files, capsys):
    d = files["dir"]
    rc = main(["wasserstein", "--graph", files["graph"], "--h", "0.01", "--mu", files["mu"], "--nu", files["nu"],
               "--out", str(d / "plan.csv")])
    assert rc == 0
    assert "W_2 = 1.9" in capsys.readouterr().out
    rep = json.loads((d / "wasserstein_report.json").read_text())
    assert rep["passed"] is True
    assert all({"measured", "expected", "tolerance", "provenance"} <= set(a) for a in rep["assertions"])


def test_mkv_is_deterministic_and_roundtrips(files):
    d = files["dir"]
    common = ["mkv", "--graph", files["graph"], "--h", "0.05", "--init", files["init"], "--V", files["V"],
              "--dt", "1e-3", "--T", "0.02", "--every", "5"]
    assert main(common + ["--out", str(d / "a.csv")]) == 0
    assert main(common + ["--out", str(d / "b.csv")]) == 0
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()
    header = (d / "a.csv").read_text().splitlines()[0]
    assert header == "t,edge,cell,eta,rho,flux"
    times, measures = read_trajectory(d / "a.csv", Grid.from_width(build_graph(STAR), 0.05))
    assert times.tolist() == pytest.approx([0.0, 0.005, 0.01, 0.015, 0.02])
    assert all(abs(m.total_mass - 1.0) <= 1e-12 for m in measures)


def test_mkv_then_ede_check(files):
    d = files["dir"]
    assert main(["mkv", "--graph", files["graph"], "--h", "0.02", "--init", files["init"], "--V", files["V"],
                 "--dt", "1e-3", "--T", "0.1", "--out", str(d / "t.csv")]) == 0
    rc = main(["ede-check", "--graph", files["graph"], "--h", "0.02", "--traj", str(d / "t.csv"), "--V", files["V"],
               "--energy-out", str(d / "energy.csv"), "--report", str(d / "ede.json")])
    assert rc in (0, 1)
    header = (d / "energy.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["t", "F"]


def test_config_defaults_and_unknown_keys(files, capsys):
    cfg = files["put"]("cfg.json", {"graph": files["graph"], "h": 0.01, "mu": files["mu"], "nu": files["nu"]})
    assert main(["wasserstein", "--config", cfg, "--report", str(files["dir"] / "w.json")]) == 0
    bad = files["put"]("bad.json", {"graph": files["graph"], "bogus": 1})
    assert main(["wasserstein", "--config", bad]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_missing_file_and_bad_parameters(files):
    assert main(["wasserstein", "--graph", files["graph"], "--mu", "nope.json", "--nu", files["nu"]]) == 2
    assert main(["mkv", "--graph", files["graph"], "--init", files["init"], "--dt", "-1", "--T", "1"]) == 2
    assert main(["example-4-1", "--eps", "0.1", "--h", "0.03", "--outdir", str(files["dir"])]) == 2


def test_suites(files, capsys, monkeypatch):
    assert main(["suite", "empty", "--outdir", str(files["dir"])]) == 0
    assert main(["suite", "no-such-suite", "--outdir", str(files["dir"])]) == 2
    monkeypatch.setenv("GRAPHOT_SEED", "x")
    assert main(["suite", "empty", "--outdir", str(files["dir"])]) == 2


def test_example_writes_csv_and_svg(files):
    d = files["dir"]
    assert main(["example-4-1", "--eps", "0.25", "--h", "0.01", "--n-t", "201", "--outdir", str(d)]) == 0
    assert (d / "example_4_1_eps0.25.csv").exists()
    assert (d / "example_4_1_eps0.25.svg").read_text().startswith("<svg")


def test_console_script(files):
    exe = shutil.which("graphot")
    if exe is None:
        pytest.skip("console script not installed")
    out = subprocess.run([exe, "suite", "empty", "--outdir", str(files["dir"])], capture_output=True, text=True)
    assert out.returncode == 0
