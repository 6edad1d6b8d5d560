import json
import math

import numpy as np

from graphot.report import Assertion, RunReport, config_hash, line_chart_svg, write_csv


def test_assertion_relations():
    assert Assertion.close("a", "x", 1.0 + 1e-7, 1.0, 1e-6).passed
    assert not Assertion.close("a", "x", math.nan, 1.0, 1e-6).passed
    assert not Assertion.close("a", "x", math.inf, 1.0, 1e-6).passed
    assert Assertion.at_most("b", "x", 0.5, 0.5).passed
    assert not Assertion.at_most("b", "x", math.nan, 0.5).passed
    assert Assertion.at_least("c", "x", math.inf, 0.1).passed
    assert not Assertion.holds("d", "x", np.bool_(False)).passed
    line = Assertion.at_most("b", "x", 0.7, 0.5).line()
    assert line.startswith("[FAIL] b:")


def test_report_json_with_numpy_values(tmp_path):
    rep = RunReport("demo", {"h": 0.01})
    rep.extend([Assertion.at_most("n", "numpy input", np.float64(1.0), np.float64(2.0))])
    rep.notes.update({"flag": np.bool_(True), "arr": np.arange(3), "inf": math.inf, "pair": (1, np.int64(2))})
    child = RunReport("child")
    child.extend([Assertion.holds("c", "child", True)])
    rep.children.append(child)
    data = json.loads(rep.write(tmp_path / "r.json").read_text())
    assert data["passed"] is True
    assert data["notes"] == {"flag": True, "arr": [0, 1, 2], "inf": "inf", "pair": [1, 2]}
    assert data["children"][0]["assertions"][0]["id"] == "c"
    assert len(rep.all_assertions()) == 2


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_csv_roundtrip_precision(tmp_path):
    x = 0.1 + 0.2
    p = write_csv(tmp_path / "a.csv", ["x", "name"], [(x, "e1")])
    q = write_csv(tmp_path / "b.csv", ["x", "name"], [(x, "e1")])
    assert p.read_bytes() == q.read_bytes()
    assert float(p.read_text().splitlines()[1].split(",")[0]) == x


def test_svg_chart(tmp_path):
    path = line_chart_svg(tmp_path / "c.svg", [("s", [0, 1, 2], [1.0, math.nan, 3.0])], title="a < b")
    text = path.read_text()
    assert text.startswith("<svg") and "a &lt; b" in text and "<polyline" in text
