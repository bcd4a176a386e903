"""
Minimal self-contained SVG line/point plots.

Only what the run reports need: linear axes with ticks, point series with
error bars, line overlays and a legend. Output is deterministic (no
timestamps, fixed number formatting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "plot", "nice_ticks"]

PALETTE = ("#1f5fa8", "#c0392b", "#2e8b57", "#d98c1f", "#6c3fa0", "#555555")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    kind: str = "line"  # 'line' or 'points'
    yerr: np.ndarray | None = None
    color: str | None = None
    dashed: bool = False
    extra: dict = field(default_factory=dict)


def nice_ticks(lo, hi, n=6):
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        step = m * mag
        if step >= raw:
            break
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt(v):
    return f"{v:.6g}"


def _limits(series, key, pad):
    vals = []
    for s in series:
        v = np.asarray(getattr(s, key), float)
        if key == "y" and s.yerr is not None:
            e = np.nan_to_num(np.asarray(s.yerr, float))
            vals += [v - e, v + e]
        else:
            vals.append(v)
    v = np.concatenate([np.ravel(a) for a in vals]) if vals else np.array([0.0, 1.0])
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def plot(series, path=None, title="", xlabel="", ylabel="", width=640, height=420,
         xlim=None, ylim=None, hlines=()):
    """Render ``series`` to SVG; returns the document and writes it if ``path``."""
    ml, mr, mt, mb = 70, 20, 36 if title else 16, 50
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = xlim or _limits(series, "x", 0.0)
    y0, y1 = ylim or _limits(series, "y", 0.05)

    def sx(x):
        return ml + (np.asarray(x, float) - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (np.asarray(y, float) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<defs><clipPath id="plot"><rect x="{ml}" y="{mt}" width="{pw}" height="{ph}"/>'
           f'</clipPath></defs>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
    # axes and ticks
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in nice_ticks(x0, x1):
        X = float(sx(t))
        out.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in nice_ticks(y0, y1):
        Y = float(sy(t))
        out.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16,{mt + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append('<g clip-path="url(#plot)">')
    for yv, style in hlines:
        Y = float(sy(yv))
        out.append(f'<line x1="{ml}" y1="{Y:.2f}" x2="{ml + pw}" y2="{Y:.2f}" stroke="#888" '
                   f'stroke-dasharray="{style or "4,3"}"/>')
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        x = np.asarray(s.x, float)
        y = np.asarray(s.y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        X, Y = sx(x[ok]), sy(y[ok])
        if s.kind == "points":
            if s.yerr is not None:
                e = np.nan_to_num(np.asarray(s.yerr, float)[ok])
                lo, hi = sy(y[ok] - e), sy(y[ok] + e)
                d = " ".join(f"M{a:.2f} {b:.2f}V{c:.2f}" for a, b, c in zip(X, lo, hi))
                out.append(f'<path d="{d}" stroke="{color}" stroke-opacity="0.5" fill="none"/>')
            pts = "".join(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.6"/>' for a, b in zip(X, Y))
            out.append(f'<g fill="{color}">{pts}</g>')
        else:
            d = " ".join(f"{'M' if j == 0 else 'L'}{a:.2f} {b:.2f}" for j, (a, b) in enumerate(zip(X, Y)))
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(f'<path d="{d}" stroke="{color}" stroke-width="1.6" fill="none"{dash}/>')
    out.append("</g>")
    # legend
    labelled = [(i, s) for i, s in enumerate(series) if s.label]
    for row, (i, s) in enumerate(labelled):
        color = s.color or PALETTE[i % len(PALETTE)]
        Y = mt + 14 + 15 * row
        X = ml + pw - 150
        if s.kind == "points":
            out.append(f'<circle cx="{X + 10}" cy="{Y - 4}" r="3" fill="{color}"/>')
        else:
            out.append(f'<line x1="{X}" y1="{Y - 4}" x2="{X + 20}" y2="{Y - 4}" stroke="{color}" '
                       f'stroke-width="2"/>')
        out.append(f'<text x="{X + 26}" y="{Y}">{escape(s.label)}</text>')
    out.append("</svg>")
    doc = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(doc)
    return doc
