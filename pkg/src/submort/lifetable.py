"""Period life tables, survivorship <-> rates, and life-expectancy posteriors."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import AgeGrid


class LifeTableError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LifeTable:
    age_grid: AgeGrid
    m: np.ndarray
    a: np.ndarray
    q: np.ndarray
    l: np.ndarray
    d: np.ndarray
    L: np.ndarray
    T: np.ndarray
    e: np.ndarray

    @property
    def e0(self) -> float:
        return float(self.e[0])

    def to_csv(self, path_or_file, scale=1.0):
        cols = ("m", "a", "q", "l", "d", "L", "T", "e")
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        f = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("age_lower",) + cols)
            for i, x in enumerate(self.age_grid.lower_bounds):
                row = [getattr(self, c)[i] for c in cols]
                row[3:7] = [v * scale for v in row[3:7]]
                w.writerow([x] + [repr(float(v)) for v in row])
        finally:
            if own:
                f.close()


def _separation_factors(m, widths):
    """Mean years lived in the interval by those dying in it."""
    a = widths / 2.0
    if widths[0] == 1.0:
        a[0] = np.clip(0.07 + 1.7 * m[0], 0.01, 0.5)
    a[-1] = np.nan  # open interval handled via e = 1/m
    return a


def rates_to_lifetable(m, age_grid: AgeGrid | None = None) -> LifeTable:
    m = np.asarray(m, dtype=float)
    age_grid = age_grid or AgeGrid()
    if m.shape != (age_grid.size,):
        raise LifeTableError(f"expected {age_grid.size} rates, got shape {m.shape}")
    if not np.all(np.isfinite(m) & (m > 0)):
        raise LifeTableError(f"rates must be positive and finite, got {m}")
    n = age_grid.widths
    a = _separation_factors(m, n)
    q = np.ones_like(m)
    q[:-1] = n[:-1] * m[:-1] / (1.0 + (n[:-1] - a[:-1]) * m[:-1])
    q = np.minimum(q, 1.0)
    l = np.empty_like(m)
    l[0] = 1.0
    l[1:] = np.cumprod(1.0 - q[:-1])
    d = l * q
    L = np.empty_like(m)
    L[:-1] = n[:-1] * l[1:] + a[:-1] * d[:-1]
    L[-1] = l[-1] / m[-1]
    a[-1] = 1.0 / m[-1]
    T = np.cumsum(L[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(l > 0, T / l, 0.0)
    return LifeTable(age_grid, m, a, q, l, d, L, T, e)


def _infant_rate_from_q(q):
    # Inverts q = m / (1 + (1 - a(m)) m) with a(m) = clip(0.07 + 1.7 m, 0.01, 0.5).
    if q == 0.0:
        return 0.0
    b = 1.0 - 0.93 * q
    m = 2.0 * q / (b + np.sqrt(b * b + 6.8 * q * q))
    if 0.07 + 1.7 * m > 0.5:
        m = q / (1.0 - 0.5 * q)
    return m


def survivorship_to_rates(l, terminal_e: float, age_grid: AgeGrid | None = None) -> np.ndarray:
    """Rates reproducing survivorship ``l`` under the same separation factors.

    ``terminal_e`` is the expectancy in the open last interval (``m = 1/e``).
    """
    l = np.asarray(l, dtype=float)
    age_grid = age_grid or AgeGrid()
    if l.shape != (age_grid.size,):
        raise LifeTableError(f"expected {age_grid.size} survivorship values, got shape {l.shape}")
    if abs(l[0] - 1.0) > 1e-12:
        raise LifeTableError(f"survivorship must start at 1, got {l[0]}")
    if not (np.all(np.diff(l) < 0) and l[-1] > 0):
        raise LifeTableError("survivorship must be strictly decreasing to a positive value")
    if not terminal_e > 0:
        raise LifeTableError("terminal expectancy must be positive")
    n = age_grid.widths
    q = 1.0 - l[1:] / l[:-1]
    a = n[:-1] / 2.0
    m = np.empty_like(l)
    m[:-1] = q / (n[:-1] - (n[:-1] - a) * q)
    if n[0] == 1.0:
        m[0] = _infant_rate_from_q(q[0])
    m[-1] = 1.0 / terminal_e
    return m


def life_expectancy(m, age_grid: AgeGrid | None = None) -> float:
    return rates_to_lifetable(m, age_grid).e0


def e0_posterior(rate_draws, age_grid: AgeGrid | None = None, levels=(0.95,)):
    """Median and interval bounds of ``e_0`` over posterior rate draws.

    ``rate_draws`` has one schedule per row. Returns a dict with ``median``,
    ``lo``/``hi`` for the first level and ``draws`` (per-draw ``e_0``).
    """
    from .sampler import quantile

    draws = np.atleast_2d(np.asarray(rate_draws, dtype=float))
    e0 = np.array([life_expectancy(m, age_grid) for m in draws])
    out = {"median": quantile(e0, 0.5), "draws": e0}
    for i, lev in enumerate(levels):
        lo, hi = quantile(e0, (1 - lev) / 2), quantile(e0, 1 - (1 - lev) / 2)
        if i == 0:
            out["lo"], out["hi"] = lo, hi
        out[f"lo{lev:g}"], out[f"hi{lev:g}"] = lo, hi
    return out
