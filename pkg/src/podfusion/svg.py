"""Dependency-free SVG scatter plot of ground truth against prediction."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np


def scatter_svg(gt: Sequence[float], pred: Sequence[float], title: str = "",
                width: int = 480, height: int = 400) -> str:
    """Points, the identity line, and the least-squares fit, on shared axes."""
    x = np.asarray(gt, dtype=float)
    y = np.asarray(pred, dtype=float)
    lo = float(min(x.min(), y.min())) if len(x) else 0.0
    hi = float(max(x.max(), y.max())) if len(x) else 1.0
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    ml, mr, mt, mb = 60, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - lo) / (hi - lo) * pw

    def sy(v):
        return mt + ph - (v - lo) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">ground truth pods</text>',
        f'<text x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {mt + ph / 2:.1f})">predicted pods</text>',
    ]
    for t in np.linspace(lo, hi, 5):
        out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{t:.0f}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(t) + 3:.1f}" text-anchor="end" font-size="10">{t:.0f}</text>')
    out.append(f'<line x1="{sx(lo):.1f}" y1="{sy(lo):.1f}" x2="{sx(hi):.1f}" y2="{sy(hi):.1f}" '
               'stroke="gray" stroke-dasharray="4 3"/>')
    if len(x) >= 2 and np.ptp(x) > 0:
        slope, intercept = np.polyfit(x, y, 1)
        out.append(f'<line x1="{sx(lo):.1f}" y1="{sy(slope * lo + intercept):.1f}" x2="{sx(hi):.1f}" '
                   f'y2="{sy(slope * hi + intercept):.1f}" stroke="firebrick"/>')
    for a, b in zip(x, y):
        out.append(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="3" fill="steelblue" fill-opacity="0.7"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
