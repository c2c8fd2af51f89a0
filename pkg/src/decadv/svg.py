"""Minimal SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math
from html import escape

__all__ = ["line_chart"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _fmt(v):
    return f"{v:.3g}"


def line_chart(series, path=None, title="", xlabel="", ylabel="", logy=False, width=640, height=400):
    """Render ``{label: (xs, ys)}`` as an SVG line chart.

    Non-finite points (and nonpositive ones when ``logy``) are dropped. The
    SVG text is returned and also written to ``path`` when given.
    """
    clean = {}
    for label, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if y is not None and math.isfinite(float(y)) and (not logy or float(y) > 0)]
        if pts:
            clean[label] = [(x, math.log10(y) if logy else y) for x, y in pts]
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>']
    if clean:
        xs = [x for pts in clean.values() for x, _ in pts]
        ys = [y for pts in clean.values() for _, y in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        sx = lambda x: ml + (x - x0) / (x1 - x0) * pw
        sy = lambda y: mt + ph - (y - y0) / (y1 - y0) * ph
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(y0, y1):
            label = _fmt(10 ** t) if logy else _fmt(t)
            out.append(f'<line x1="{ml - 4}" y1="{sy(t):.1f}" x2="{ml + pw}" y2="{sy(t):.1f}" stroke="#ddd"/>')
            out.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{label}</text>')
        for i, (label, pts) in enumerate(clean.items()):
            color = _COLORS[i % len(_COLORS)]
            d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{d}"/>')
            ly = mt + 16 * i + 8
            out.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{ml + pw + 36}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel + (" (log)" if logy else ""))}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
