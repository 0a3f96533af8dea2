"""Minimal deterministic SVG line charts (800x500 viewBox)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _f(x: float) -> str:
    return f"{x:.2f}"


def line_chart(series, *, title: str, xlabel: str, ylabel: str, ylim=None, xticks=None) -> str:
    """``series`` is a list of dicts: label, xs, ys, and optional color / dashed."""
    xs_all = [x for s in series for x in s["xs"]]
    ys_all = [y for s in series for y in s["ys"]]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if ylim is not None:
        y0, y1 = ylim
    else:
        y0, y1 = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
        if y1 == y0:
            y1 = y0 + 1.0
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" '
           'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    for t in _nice_ticks(y0, y1):
        out.append(f'<line x1="{LEFT}" y1="{_f(py(t))}" x2="{LEFT + pw}" y2="{_f(py(t))}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(py(t) + 4)}" text-anchor="end">{t:g}</text>')
    for t in (xticks if xticks is not None else _nice_ticks(x0, x1)):
        out.append(f'<line x1="{_f(px(t))}" y1="{TOP + ph}" x2="{_f(px(t))}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_f(px(t))}" y="{TOP + ph + 18}" text-anchor="middle">{t:g}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = s.get("color", PALETTE[i % len(PALETTE)])
        dash = ' stroke-dasharray="6 4"' if s.get("dashed") else ""
        pts = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(s["xs"], s["ys"]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{pts}"/>')
        ly = TOP + 10 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="1.8"{dash}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(s["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
