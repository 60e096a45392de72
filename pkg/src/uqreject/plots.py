"""Minimal SVG line plots (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

_W, _H = 320, 240
_ML, _MR, _MT, _MB = 48, 12, 28, 36


def _num(v):
    return f"{v:.2f}"


def _panel(x0, title, series, y_range, x_range=(0.0, 1.0)):
    ymin, ymax = y_range
    xmin, xmax = x_range
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(x):
        return x0 + _ML + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return _MT + (1.0 - (y - ymin) / (ymax - ymin)) * ph

    out = [
        f'<g class="panel">',
        f'<text x="{_num(x0 + _W / 2)}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{_num(x0 + _ML)}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for i in range(5):
        yv = ymin + (ymax - ymin) * i / 4
        xv = xmin + (xmax - xmin) * i / 4
        out.append(f'<text x="{_num(x0 + _ML - 4)}" y="{_num(sy(yv) + 4)}" text-anchor="end" font-size="10">{yv:.2g}</text>')
        out.append(f'<text x="{_num(sx(xv))}" y="{_H - _MB + 14}" text-anchor="middle" font-size="10">{xv:.2g}</text>')
    out.append(f'<text x="{_num(x0 + _ML + pw / 2)}" y="{_H - 6}" text-anchor="middle" font-size="11">rejection fraction</text>')
    for k, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        segments, current = [], []
        for x, y in zip(xs, ys):
            if y is None or not math.isfinite(y):
                if current:
                    segments.append(current)
                current = []
                continue
            y = min(max(y, ymin), ymax)
            current.append(f"{_num(sx(x))},{_num(sy(y))}")
        if current:
            segments.append(current)
        for seg in segments:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
        ly = _MT + 12 + 12 * k
        out.append(f'<text x="{_num(x0 + _ML + 6)}" y="{ly}" font-size="10" fill="{color}">{escape(name)}</text>')
    out.append("</g>")
    return out


def rejection_svg(curves, title=None):
    """Three side-by-side panels (NRA, CQ, RQ) with one line per named curve.

    ``curves`` maps a label to an object with ``column(name)`` returning
    per-grid-point arrays (a :class:`RejectionCurve` or compatible).
    """
    panels = []
    finite_rq = [v for c in curves.values() for v in c.column("rq") if math.isfinite(v)]
    rq_max = max([1.0, *finite_rq]) * 1.05
    for i, (metric, yr) in enumerate((("nra", (0.0, 1.0)), ("cq", (0.0, 1.0)), ("rq", (0.0, rq_max)))):
        series = {name: (list(c.column("q")), list(c.column(metric))) for name, c in curves.items()}
        panels.extend(_panel(i * _W, metric.upper(), series, yr))
    height = _H + (20 if title else 0)
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{3 * _W}" height="{height}" '
        f'viewBox="0 0 {3 * _W} {height}" font-family="sans-serif">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        head.append(f'<text x="{3 * _W / 2}" y="{_H + 14}" text-anchor="middle" font-size="12">{escape(title)}</text>')
    return "\n".join([*head, *panels, "</svg>"]) + "\n"
