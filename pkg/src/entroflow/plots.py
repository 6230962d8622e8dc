"""Standalone SVG line plots written as plain text.

Each series is drawn as a polyline with a circle marker per point.  Axes map
data affinely (or log-affinely) to the plot box; ``equal_aspect`` uses one
scale for both axes so slopes in data space are slopes on the page.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigurationError

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 150, 40, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def _range(v: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi == lo:
        pad = 0.5 * abs(lo) if lo != 0 else 0.5
        return lo - pad, hi + pad
    return lo, hi


def _num(v: float) -> str:
    return "%.6f" % v


def _tick(v: float, log: bool) -> str:
    return f"1e{v:g}" if log else f"{v:.4g}"


def line_plot(
    series: Sequence[Series],
    title: str,
    xlabel: str,
    ylabel: str,
    loglog: bool = False,
    equal_aspect: bool = False,
) -> str:
    """Render ``series`` to SVG text.  Log axes drop non-positive values."""
    prepared = []
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if loglog:
            keep &= (x > 0) & (y > 0)
            x, y = np.log10(np.where(keep, x, 1.0)), np.log10(np.where(keep, y, 1.0))
        prepared.append((s.label, x[keep], y[keep]))
    allx = np.concatenate([p[1] for p in prepared]) if prepared else np.array([])
    ally = np.concatenate([p[2] for p in prepared]) if prepared else np.array([])
    if allx.size == 0:
        raise ConfigurationError("nothing to plot: no finite points")
    x0, x1 = _range(allx)
    y0, y1 = _range(ally)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    sx, sy = pw / (x1 - x0), ph / (y1 - y0)
    if equal_aspect:
        sx = sy = min(sx, sy)

    def px(v):
        return LEFT + (v - x0) * sx

    def py(v):
        return TOP + ph - (v - y0) * sy

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<title>{escape(title)}</title>',
        f'<text x="{WIDTH / 2:g}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(
            f'<text class="xtick" x="{_num(LEFT + pw * k / 4)}" y="{TOP + ph + 16}" '
            f'text-anchor="middle">{escape(_tick(xv, loglog))}</text>'
        )
        out.append(
            f'<text class="ytick" x="{LEFT - 6}" y="{_num(TOP + ph - ph * k / 4 + 4)}" '
            f'text-anchor="end">{escape(_tick(yv, loglog))}</text>'
        )
    out.append(
        f'<text x="{LEFT + pw / 2:g}" y="{HEIGHT - 16}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="18" y="{TOP + ph / 2:g}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2:g})">{escape(ylabel)}</text>'
    )
    for i, (label, x, y) in enumerate(prepared):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, y))
        if x.size > 1:
            out.append(f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        for a, b in zip(x, y):
            out.append(f'<circle class="marker" cx="{_num(px(a))}" cy="{_num(py(b))}" r="2.5" fill="{color}"/>')
        ly = TOP + 14 + 16 * i
        out.append(f'<line x1="{WIDTH - RIGHT + 10}" y1="{ly - 4}" x2="{WIDTH - RIGHT + 30}" y2="{ly - 4}" stroke="{color}"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 34}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def ledger_plot(ledger, scenario_hash: str, columns: Sequence[str] = ("energy", "bf", "bd_raw")) -> str:
    """Functionals against time; all-NaN columns are skipped."""
    t = ledger.times
    series = [Series(c, t, ledger.column(c)) for c in columns if np.any(np.isfinite(ledger.column(c)))]
    return line_plot(series, f"functionals vs time [{scenario_hash}]", "time", "value")


def convergence_plot(report, x_key: str, y_keys: Sequence[str], scenario_hash: str, xlabel: str | None = None) -> str:
    """Log-log errors against ``x_key`` (eps, dx or floor) with equal aspect."""
    x = report.column(x_key)
    series = []
    for k in y_keys:
        y = report.column(k)
        if np.any(np.isfinite(y) & (y > 0)):
            series.append(Series(k, x, y))
    if not series:
        raise ConfigurationError("nothing to plot: no positive finite values")
    return line_plot(
        series, f"{', '.join(y_keys)} vs {x_key} [{scenario_hash}]", xlabel or x_key, "error",
        loglog=True, equal_aspect=True,
    )


def write_svg(svg: str, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")


def polyline_points(svg: str) -> list[np.ndarray]:
    """Points of every polyline in ``svg`` (page coordinates), for checks."""
    import re

    out = []
    for m in re.finditer(r'<polyline[^>]*points="([^"]*)"', svg):
        pts = [tuple(map(float, p.split(","))) for p in m.group(1).split()]
        out.append(np.array(pts))
    return out


__all__ = ["Series", "convergence_plot", "ledger_plot", "line_plot", "polyline_points", "write_svg"]
