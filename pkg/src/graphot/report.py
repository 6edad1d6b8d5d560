"""Run reports, deterministic CSV output and a minimal SVG line chart."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Assertion", "RunReport", "config_hash", "write_csv", "line_chart_svg"]


@dataclass
class Assertion:
    """One checked quantity: ``passed`` iff ``measured`` meets ``expected`` within ``tolerance``."""

    id: str
    description: str
    measured: float
    expected: float
    tolerance: float
    passed: bool
    provenance: str = "derived"
    relation: str = "abs-diff"

    @classmethod
    def close(cls, id, description, measured, expected, tolerance, provenance="derived"):
        ok = math.isfinite(measured) and abs(measured - expected) <= tolerance
        return cls(id, description, float(measured), float(expected), float(tolerance), bool(ok), provenance)

    @classmethod
    def at_most(cls, id, description, measured, bound, provenance="derived"):
        ok = not math.isnan(measured) and measured <= bound
        return cls(id, description, float(measured), float(bound), 0.0, bool(ok), provenance, "upper-bound")

    @classmethod
    def at_least(cls, id, description, measured, bound, provenance="derived"):
        ok = not math.isnan(measured) and measured >= bound
        return cls(id, description, float(measured), float(bound), 0.0, bool(ok), provenance, "lower-bound")

    @classmethod
    def holds(cls, id, description, flag, provenance="derived"):
        return cls(id, description, float(bool(flag)), 1.0, 0.0, bool(flag), provenance, "true")

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        if self.relation == "abs-diff":
            rel = f"expected {self.expected:.10g} +- {self.tolerance:.3g}"
        elif self.relation == "upper-bound":
            rel = f"bound <= {self.expected:.10g}"
        elif self.relation == "lower-bound":
            rel = f"bound >= {self.expected:.10g}"
        else:
            rel = "must hold"
        return f"[{mark}] {self.id}: {self.description}: measured {self.measured:.10g}, {rel}"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        x = x.tolist()
    elif isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


@dataclass
class RunReport:
    command: str
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)
    assertions: list = field(default_factory=list)
    children: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return config_hash(self.config)

    @property
    def passed(self):
        return all(a.passed for a in self.assertions) and all(c.passed for c in self.children)

    def all_assertions(self):
        out = list(self.assertions)
        for c in self.children:
            out += c.all_assertions()
        return out

    def extend(self, assertions):
        self.assertions.extend(assertions)

    def to_dict(self):
        return _jsonable(
            {
                "command": self.command,
                "config_hash": self.config_hash,
                "config": self.config,
                "wall_time": self.wall_time,
                "passed": self.passed,
                "outputs": [str(p) for p in self.outputs],
                "assertions": [asdict(a) for a in self.assertions],
                "children": [c.to_dict() for c in self.children],
                "notes": self.notes,
            }
        )

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def summary_lines(self):
        lines = [f"== {self.command} ({self.wall_time:.1f} s)"]
        lines += [a.line() for a in self.assertions]
        for c in self.children:
            lines += c.summary_lines()
        return lines


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def write_csv(path, header, rows):
    """Write rows with floats in round-trip precision (byte-identical reruns)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def line_chart_svg(path, series, title="", xlabel="", ylabel="", width=640, height=420):
    """Plain SVG line chart. ``series`` is a list of ``(label, xs, ys)``."""
    ml, mr, mt, mb = 70, 20, 40, 50
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    if x1 == x0:
        x1 = x0 + 1.0

    def px(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
    ]
    for i in range(6):
        xv = x0 + i * (x1 - x0) / 5
        yv = y0 + i * (y1 - y0) / 5
        out.append(
            f'<text x="{px(xv):.1f}" y="{height - mb + 18}" text-anchor="middle" font-size="11">{xv:.3g}</text>'
        )
        out.append(f'<text x="{ml - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="11">{yv:.4g}</text>')
    out.append(
        f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{(mt + height - mb) / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})">{escape(ylabel)}</text>'
    )
    for n, (label, xs, ys) in enumerate(series):
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        c = colors[n % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{pts}"/>')
        out.append(f'<text x="{width - mr - 4}" y="{mt + 16 * (n + 1)}" text-anchor="end" font-size="12" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path
