"""Minimal SVG rendering for line charts and grouped histograms.

Output is plain text with fixed number formatting, so identical data gives
identical bytes.
"""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 160, 40, 50


def _n(x: float) -> str:
    return f"{x:.2f}"


def _frame(title: str, xlabel: str, ylabel: str, x0, x1, y0, y1) -> list[str]:
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{LEFT + pw / 2:.0f}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{TOP + ph / 2:.0f}" text-anchor="middle" transform="rotate(-90 15 {TOP + ph / 2:.0f})">{escape(ylabel)}</text>',
    ]
    for i in range(5):
        fx = i / 4
        xv, yv = x0 + fx * (x1 - x0), y0 + fx * (y1 - y0)
        px, py = LEFT + fx * pw, TOP + ph - fx * ph
        out.append(f'<text x="{_n(px)}" y="{TOP + ph + 15}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{LEFT - 5}" y="{_n(py + 4)}" text-anchor="end">{yv:.3g}</text>')
    return out


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = TOP + 10 + 18 * i
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{W - RIGHT + 10}" y="{y - 8}" width="12" height="10" fill="{c}"/>')
        out.append(f'<text x="{W - RIGHT + 28}" y="{y}">{escape(name)}</text>')
    return out


def _span(lo: float, hi: float) -> tuple[float, float]:
    return (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)


def line_chart(series: Mapping[str, Sequence[tuple[float, float]]], title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """One polyline with point markers per named series of (x, y) points."""
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise ValueError("nothing to plot")
    x0, x1 = _span(min(p[0] for p in pts), max(p[0] for p in pts))
    y0, y1 = _span(min(p[1] for p in pts), max(p[1] for p in pts))
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def xy(x, y):
        return LEFT + (x - x0) / (x1 - x0) * pw, TOP + ph - (y - y0) / (y1 - y0) * ph

    out = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    for i, (name, s) in enumerate(series.items()):
        c = PALETTE[i % len(PALETTE)]
        coords = [xy(x, y) for x, y in s]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="' + " ".join(f"{_n(a)},{_n(b)}" for a, b in coords) + '"/>')
        out += [f'<circle cx="{_n(a)}" cy="{_n(b)}" r="2.5" fill="{c}"/>' for a, b in coords]
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def histogram_chart(edges: Sequence[float], counts: Mapping[str, Sequence[int]], title: str = "", xlabel: str = "", ylabel: str = "count") -> str:
    """Side-by-side bars per bin for each named group; all groups share ``edges``."""
    if len(edges) < 2:
        raise ValueError("need at least one bin")
    x0, x1 = float(edges[0]), float(edges[-1])
    top = max([max(c) for c in counts.values() if len(c)] + [1])
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    out = _frame(title, xlabel, ylabel, x0, x1, 0, top)
    k = max(len(counts), 1)
    for i, (name, cs) in enumerate(counts.items()):
        c = PALETTE[i % len(PALETTE)]
        for j, n in enumerate(cs):
            lo, hi = float(edges[j]), float(edges[j + 1])
            bw = (hi - lo) / (x1 - x0) * pw / k
            bx = LEFT + (lo - x0) / (x1 - x0) * pw + i * bw
            bh = n / top * ph
            out.append(f'<rect x="{_n(bx)}" y="{_n(TOP + ph - bh)}" width="{_n(bw)}" height="{_n(bh)}" fill="{c}" fill-opacity="0.8"/>')
    out += _legend(list(counts))
    out.append("</svg>")
    return "\n".join(out) + "\n"
