"""Minimal SVG line plots, enough for the report bundle."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(v)
        v += step
    return out


def line_plot(path, series, title: str = "", xlabel: str = "", ylabel: str = "",
              logx: bool = False, logy: bool = False, width: int = 640, height: int = 400) -> None:
    """series: iterable of (x, y, label). Points with non-finite coordinates are skipped."""
    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    pts = []
    for x, y, label in series:
        xy = [(tx(a), ty(b)) for a, b in zip(x, y)
              if (a > 0 or not logx) and (b > 0 or not logy) and math.isfinite(a) and math.isfinite(b)]
        pts.append((xy, label))
    allx = [p[0] for xy, _ in pts for p in xy] or [0.0, 1.0]
    ally = [p[1] for xy, _ in pts for p in xy] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 70, 20, 40, 50
    W, H = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * W

    def py(v):
        return mt + H - (v - y0) / (y1 - y0) * H

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{W}" height="{H}" fill="none" stroke="black"/>']
    for v in _ticks(x0, x1):
        lab = f"{10 ** v:.3g}" if logx else f"{v:.3g}"
        out.append(f'<line x1="{px(v):.1f}" y1="{mt + H}" x2="{px(v):.1f}" y2="{mt + H + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.1f}" y="{mt + H + 18}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<line x1="{ml - 5}" y1="{py(v):.1f}" x2="{ml}" y2="{py(v):.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{py(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + W / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + H / 2}" text-anchor="middle" transform="rotate(-90 15 {mt + H / 2})">{escape(ylabel)}</text>')
    for k, (xy, label) in enumerate(pts):
        c = COLORS[k % len(COLORS)]
        if xy:
            d = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in xy)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{d}"/>')
        out.append(f'<text x="{ml + 10}" y="{mt + 16 + 14 * k}" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out))
