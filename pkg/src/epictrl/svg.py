"""Minimal SVG writers (no plotting dependency, deterministic output)."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot", "network_map"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, k: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / k
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(xs, series: dict, *, xlabel: str = "", ylabel: str = "", title: str = "", width: int = 480, height: int = 320) -> str:
    """Polyline chart; ``series`` maps legend label to y-values (NaN breaks the line)."""
    xs = np.asarray(xs, dtype=float)
    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ys_all = ys_all[np.isfinite(ys_all)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (0.0, 1.0) if ys_all.size == 0 else (min(0.0, float(ys_all.min())), float(ys_all.max()))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    colors = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{_fmt(px(t))}" y="{mt + ph + 15}" text-anchor="middle" font-size="10">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{ml - 5}" y="{_fmt(py(t) + 3)}" text-anchor="end" font-size="10">{t:.3g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle" font-size="11">{xlabel}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {mt + ph / 2})">{ylabel}</text>')
    for k, (label, ys) in enumerate(series.items()):
        color = colors[k % len(colors)]
        seg = []
        for x, y in zip(xs, np.asarray(ys, dtype=float)):
            if np.isfinite(y):
                seg.append(f"{_fmt(px(x))},{_fmt(py(y))}")
            elif seg:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
                seg = []
        if seg:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
        out.append(f'<text x="{ml + 10}" y="{mt + 12 + 13 * k}" font-size="10" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def network_map(coords, edges, values, *, title: str = "", width: int = 480, height: int = 480) -> str:
    """Nodes shaded from white (0) to dark blue (max of ``values``)."""
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pad = 30
    xy = pad + (coords - lo) / span * np.array([width - 2 * pad, height - 2 * pad - 20])
    xy[:, 1] += 20
    top = float(values.max()) if values.size and values.max() > 0 else 1.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for i, j in edges:
        out.append(f'<line x1="{_fmt(xy[i, 0])}" y1="{_fmt(xy[i, 1])}" x2="{_fmt(xy[j, 0])}" y2="{_fmt(xy[j, 1])}" stroke="#999" stroke-width="0.8"/>')
    for k, (x, y) in enumerate(xy):
        s = max(0.0, min(1.0, values[k] / top))
        r, g, b = (int(round(255 - s * (255 - c))) for c in (20, 40, 110))
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="9" fill="rgb({r},{g},{b})" stroke="black" stroke-width="0.6"/>')
        fg = "white" if s > 0.55 else "black"
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(y + 3)}" text-anchor="middle" font-size="8" fill="{fg}">{k}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def circle_layout(n: int) -> np.ndarray:
    ang = 2 * np.pi * np.arange(n) / max(n, 1)
    return np.column_stack([np.cos(ang), np.sin(ang)])
