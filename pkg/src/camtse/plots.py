"""Minimal static SVG charts, written as plain text."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 320
PAD_L, PAD_R, PAD_T, PAD_B = 60, 20, 30, 45


def _frame(title: str, xlabel: str, ylabel: str, x0, x1, y0, y1) -> list[str]:
    pw, ph = W - PAD_L - PAD_R, H - PAD_T - PAD_B
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{PAD_L + pw / 2:.1f}" y="{H - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
        f'<text x="14" y="{PAD_T + ph / 2:.1f}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {PAD_T + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for v, anchor, x, y in ((x0, "start", PAD_L, H - PAD_B + 14), (x1, "end", W - PAD_R, H - PAD_B + 14)):
        out.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.4g}</text>')
    for v, y in ((y0, H - PAD_B), (y1, PAD_T + 8)):
        out.append(f'<text x="{PAD_L - 4}" y="{y}" text-anchor="end" font-size="10">{v:.4g}</text>')
    return out


def _scale(v, lo, hi, a, b):
    return a + (np.asarray(v, dtype=float) - lo) / (hi - lo) * (b - a)


def _span(v):
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi <= lo:
        lo, hi = lo - 0.5 * max(abs(lo), 1e-3), hi + 0.5 * max(abs(hi), 1e-3)
    return lo, hi


def histogram_svg(values, bins: int = 20, title: str = "", xlabel: str = "") -> str:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        v = np.zeros(1)
    counts, edges = np.histogram(v, bins=bins, range=_span(v))
    top = max(int(counts.max()), 1)
    out = _frame(title, xlabel, "count", edges[0], edges[-1], 0, top)
    xs = _scale(edges, edges[0], edges[-1], PAD_L, W - PAD_R)
    for c, a, b in zip(counts, xs[:-1], xs[1:]):
        y = _scale(c, 0, top, H - PAD_B, PAD_T)
        out.append(f'<rect x="{a:.2f}" y="{y:.2f}" width="{b - a:.2f}" height="{H - PAD_B - y:.2f}" '
                   'fill="steelblue" stroke="white"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_svg(x, y, slope=None, intercept=None, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size == 0:
        x = y = np.zeros(1)
    x0, x1 = _span(x)
    y0, y1 = _span(y)
    out = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    px = _scale(x, x0, x1, PAD_L, W - PAD_R)
    py = _scale(y, y0, y1, H - PAD_B, PAD_T)
    out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="steelblue"/>' for a, b in zip(px, py))
    if slope is not None and intercept is not None:
        ly = _scale(slope * np.array([x0, x1]) + intercept, y0, y1, H - PAD_B, PAD_T)
        out.append(f'<line x1="{PAD_L}" y1="{ly[0]:.2f}" x2="{W - PAD_R}" y2="{ly[1]:.2f}" '
                   'stroke="firebrick" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
