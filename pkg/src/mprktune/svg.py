"""Minimal log-log work-precision scatter plots as standalone SVG."""
from __future__ import annotations

import math
from html import escape

__all__ = ["wp_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _ticks(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def wp_svg(series: dict, title="", width=640, height=480) -> str:
    """``series`` maps a label to a list of WP points (``total``, ``err``, ``aborted``).

    Steps go on the x axis and error on the y axis, both log10.  Aborted
    points are drawn hollow and left out of the slope labels.
    """
    pts = [(math.log10(p.total), math.log10(p.err))
           for ps in series.values() for p in ps if p.finite and p.total > 0 and p.err > 0]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs, ys = zip(*pts)
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1 += x1 == x0
    y1 += y1 == y0
    ml, mr, mt, mb = 70, 160, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">total steps S+R</text>',
           f'<text x="15" y="{mt + ph / 2:.1f}" transform="rotate(-90 15 {mt + ph / 2:.1f})" '
           f'text-anchor="middle">err</text>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">1e{t}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 5}" y1="{sy(t):.1f}" x2="{ml}" y2="{sy(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">1e{t}</text>')
    for n, (label, ps) in enumerate(series.items()):
        color = _COLORS[n % len(_COLORS)]
        good = []
        for p in ps:
            if not (p.finite and p.total > 0 and p.err > 0):
                continue
            cx, cy = sx(math.log10(p.total)), sy(math.log10(p.err))
            fill = "none" if p.aborted is not None else color
            out.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="4" stroke="{color}" fill="{fill}"/>')
            if p.aborted is None:
                good.append(p)
        for a, b in zip(good, good[1:]):
            dx = math.log10(b.total) - math.log10(a.total)
            ax, ay = sx(math.log10(a.total)), sy(math.log10(a.err))
            bx, by = sx(math.log10(b.total)), sy(math.log10(b.err))
            out.append(f'<line x1="{ax:.1f}" y1="{ay:.1f}" x2="{bx:.1f}" y2="{by:.1f}" stroke="{color}"/>')
            if dx != 0:
                slope = (math.log10(b.err) - math.log10(a.err)) / dx
                out.append(f'<text x="{(ax + bx) / 2 + 4:.1f}" y="{(ay + by) / 2 - 4:.1f}" '
                           f'fill="{color}" font-size="9">{slope:.2f}</text>')
        ly = mt + 14 + 16 * n
        out.append(f'<circle cx="{ml + pw + 14}" cy="{ly - 4}" r="4" fill="{color}"/>')
        out.append(f'<text x="{ml + pw + 24}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
