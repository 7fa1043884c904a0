"""Plain SVG fit plots: observed points, posterior median, 95% band, truth."""

from __future__ import annotations

import math

import numpy as np

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 40, 50


def _f(v):
    return f"{v:.2f}"


def render_fit_plot(area, year, ages, observed, median, lower, upper, truth=None) -> str:
    """SVG of log-rates by age. ``observed`` may hold NaN for absent cells."""
    ages = np.asarray(ages, float)
    obs = np.full(ages.size, np.nan) if observed is None else np.asarray(observed, float)
    med, lo, hi = (np.asarray(v, float) for v in (median, lower, upper))
    tru = None if truth is None else np.asarray(truth, float)
    vals = [lo, hi, med, obs[~np.isnan(obs)]] + ([tru] if tru is not None else [])
    allv = np.concatenate([v for v in vals if v.size])
    ymin, ymax = math.floor(allv.min()), math.ceil(allv.max())
    if ymax == ymin:
        ymax += 1
    xmax = max(float(ages[-1]), 1.0)

    def px(a):
        return LEFT + (W - LEFT - RIGHT) * a / xmax

    def py(v):
        return TOP + (H - TOP - BOTTOM) * (ymax - v) / (ymax - ymin)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="24" text-anchor="middle" font-size="14">{area}, {year}</text>',
    ]
    x0, y0, x1, y1 = LEFT, H - BOTTOM, W - RIGHT, TOP
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for v in range(ymin, ymax + 1):
        out.append(f'<text x="{x0 - 6}" y="{_f(py(v) + 4)}" text-anchor="end" font-size="11">{v}</text>')
    for a in range(0, int(xmax) + 1, 10):
        out.append(f'<text x="{_f(px(a))}" y="{y0 + 16}" text-anchor="middle" font-size="11">{a}</text>')
    out.append(f'<text x="{(x0 + x1) // 2}" y="{H - 12}" text-anchor="middle" font-size="12">age</text>')
    out.append(f'<text x="16" y="{(y0 + y1) // 2}" font-size="12" '
               f'transform="rotate(-90 16 {(y0 + y1) // 2})" text-anchor="middle">log mortality rate</text>')
    band = [f"{_f(px(a))},{_f(py(v))}" for a, v in zip(ages, hi)]
    band += [f"{_f(px(a))},{_f(py(v))}" for a, v in zip(ages[::-1], lo[::-1])]
    out.append(f'<polygon points="{" ".join(band)}" fill="red" fill-opacity="0.25" stroke="none"/>')
    line = " ".join(f"{_f(px(a))},{_f(py(v))}" for a, v in zip(ages, med))
    out.append(f'<polyline points="{line}" fill="none" stroke="red" stroke-width="2"/>')
    if tru is not None:
        line = " ".join(f"{_f(px(a))},{_f(py(v))}" for a, v in zip(ages, tru))
        out.append(f'<polyline points="{line}" fill="none" stroke="black" stroke-dasharray="6,4"/>')
    for a, v in zip(ages, obs):
        if not np.isnan(v):
            out.append(f'<circle cx="{_f(px(a))}" cy="{_f(py(v))}" r="3" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
