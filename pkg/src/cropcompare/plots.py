"""Bare-bones SVG scatter and line plots used as verification aids."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN = 50
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"]


def _scale(lo: float, hi: float, out_lo: float, out_hi: float):
    if hi == lo:
        lo, hi = lo - 1, hi + 1
    return lambda v: out_lo + (v - lo) * (out_hi - out_lo) / (hi - lo)


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> list[str]:
    x0, x1 = MARGIN, WIDTH - 20
    y0, y1 = HEIGHT - MARGIN, 30
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2})">{escape(ylabel)}</text>',
        f'<text x="{x0}" y="{y0 + 14}" text-anchor="middle">{xr[0]:g}</text>',
        f'<text x="{x1}" y="{y0 + 14}" text-anchor="middle">{xr[1]:g}</text>',
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end">{yr[0]:.2f}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 4}" text-anchor="end">{yr[1]:.2f}</text>',
    ]


def scatter_svg(points: Sequence[tuple[float, float, str]], path, title="", xlabel="", ylabel=""):
    """Scatter of labeled (x, y, label) points."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    xr, yr = (min(xs), max(xs)), (min(ys), max(ys))
    sx = _scale(*xr, MARGIN, WIDTH - 20)
    sy = _scale(*yr, HEIGHT - MARGIN, 30)
    parts = _frame(title, xlabel, ylabel, xr, yr)
    for x, y, label in points:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#1f77b4">'
                     f'<title>{escape(label)}</title></circle>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def lines_svg(series: Mapping[str, Sequence[tuple[float, float | None]]], path, title="",
              xlabel="", ylabel=""):
    """One polyline per named series; None values break the line."""
    pts = [(x, y) for s in series.values() for x, y in s if y is not None]
    if not pts:
        pts = [(0.0, 0.0)]
    xr = (min(p[0] for p in pts), max(p[0] for p in pts))
    yr = (min(p[1] for p in pts), max(p[1] for p in pts))
    sx = _scale(*xr, MARGIN, WIDTH - 20)
    sy = _scale(*yr, HEIGHT - MARGIN, 30)
    parts = _frame(title, xlabel, ylabel, xr, yr)
    for k, (name, values) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        run: list[str] = []
        runs = [run]
        for x, y in values:
            if y is None:
                run = []
                runs.append(run)
            else:
                run.append(f"{sx(x):.2f},{sy(y):.2f}")
        for r in runs:
            if r:
                parts.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(r)}">'
                             f'<title>{escape(name)}</title></polyline>')
        parts.append(f'<text x="{WIDTH - 24}" y="{40 + 13 * k}" text-anchor="end" '
                     f'fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
