"""Tiny SVG line-plot writer for sweep panels.

Points joined by a polyline, optional vertical error bars, optional log
axes and axis labels. Output is deterministic for identical inputs.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 36, 56


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _range(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(xs, ys, *, xlabel: str, ylabel: str, title: str = "", yerr=None,
              logx: bool = False, logy: bool = False) -> str:
    if len(xs) != len(ys) or not xs:
        raise ValueError("xs and ys must be non-empty and of equal length")
    tx = math.log10 if logx else float
    ty = math.log10 if logy else float
    px = [tx(x) for x in xs]
    py = [ty(y) for y in ys]
    lows = py
    highs = py
    if yerr is not None:
        lows = [ty(max(y - e, 1e-300)) if logy else y - e for y, e in zip(ys, yerr)]
        highs = [ty(y + e) for y, e in zip(ys, yerr)]
    x0, x1 = _range(px)
    y0, y1 = _range(lows + highs)
    w = WIDTH - MARGIN_L - MARGIN_R
    h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v):
        return MARGIN_L + (v - x0) / (x1 - x0) * w

    def sy(v):
        return MARGIN_T + h - (v - y0) / (y1 - y0) * h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{w}" height="{h}" fill="none" stroke="black"/>']
    for v in _ticks(x0, x1):
        label = f"{10 ** v:.3g}" if logx else f"{v:.3g}"
        out.append(f'<line x1="{_fmt(sx(v))}" y1="{MARGIN_T + h}" x2="{_fmt(sx(v))}" '
                   f'y2="{MARGIN_T + h + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(v))}" y="{MARGIN_T + h + 16}" text-anchor="middle">{label}</text>')
    for v in _ticks(y0, y1):
        label = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<line x1="{MARGIN_L - 4}" y1="{_fmt(sy(v))}" x2="{MARGIN_L}" '
                   f'y2="{_fmt(sy(v))}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(sy(v) + 4)}" text-anchor="end">{label}</text>')
    pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(px, py))
    out.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for i, (a, b) in enumerate(zip(px, py)):
        if yerr is not None:
            out.append(f'<line x1="{_fmt(sx(a))}" y1="{_fmt(sy(lows[i]))}" x2="{_fmt(sx(a))}" '
                       f'y2="{_fmt(sy(highs[i]))}" stroke="gray"/>')
        out.append(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="3" fill="steelblue"/>')
    xl = escape(xlabel + (" (log)" if logx else ""))
    yl = escape(ylabel + (" (log)" if logy else ""))
    out.append(f'<text x="{MARGIN_L + w / 2}" y="{HEIGHT - 14}" text-anchor="middle">{xl}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + h / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN_T + h / 2})">{yl}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
