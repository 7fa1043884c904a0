"""Scoring against known truth, and the Loess / Brass comparison fits."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit

from .core import MortalityDataset, observed_log_rates
from .lifetable import LifeTable, _separation_factors
from .model import ModelSpec
from .pca import PrincipalComponentBasis, build_basis
from .sampler import SamplerConfig, gelman_rubin, quantile, run
from .simulator import (
    LOGIT_CLAMP, BENCHMARK_SIZES, BrassError, BrassParams, brass_rates, make_counties,
    reference_schedules, simulate_dataset, standard_lifetable,
)

log = logging.getLogger(__name__)

LEVELS = (0.8, 0.9, 0.95)


class NoFitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IntervalSet:
    """Natural-scale interval bounds and point estimates, any matching shape."""

    lower: np.ndarray
    upper: np.ndarray
    estimate: np.ndarray

    def __post_init__(self):
        lo, hi, est = (np.asarray(v, float) for v in (self.lower, self.upper, self.estimate))
        if lo.shape != hi.shape or lo.shape != est.shape:
            raise ValueError("interval arrays must share a shape")
        if np.any(lo < 0) or np.any(lo > est) or np.any(est > hi):
            raise ValueError("intervals must satisfy 0 <= lower <= estimate <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "estimate", est)


def rmse(est, truth, axis=None) -> float | np.ndarray:
    """Root of the mean squared difference (over ``axis``; all entries by default)."""
    est, truth = np.asarray(est, float), np.asarray(truth, float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return np.sqrt(np.mean((est - truth) ** 2, axis=axis))


def coverage(truth, intervals: IntervalSet) -> float:
    """Fraction of cells with ``lower <= truth < upper``."""
    truth = np.asarray(truth, float)
    if truth.shape != intervals.lower.shape:
        raise ValueError("truth and intervals are not aligned")
    hit = (truth >= intervals.lower) & (truth < intervals.upper)
    return float(hit.mean())


def fit_loess(log_rates, span: float = 0.75, x=None) -> np.ndarray:
    """Local-linear tricube smoother over the age index; returns natural-scale rates.

    NaN entries (no observed deaths) are left out of the fit but still predicted.
    """
    yv = np.asarray(log_rates, float)
    xs = np.arange(yv.size, dtype=float) if x is None else np.asarray(x, float)
    ok = ~np.isnan(yv)
    n = int(ok.sum())
    if n < 4:
        raise NoFitError(f"loess needs at least 4 observed points, got {n}")
    xf, yf = xs[ok], yv[ok]
    q = min(n, int(np.ceil(span * n)))
    out = np.empty(yv.size)
    for i, x0 in enumerate(xs):
        dist = np.abs(xf - x0)
        h = np.sort(dist)[q - 1]
        if span > 1:
            h *= span
        h = max(h, 1e-12) * (1 + 1e-9)
        w = np.clip(1 - (dist / h) ** 3, 0, None) ** 3
        sw = w.sum()
        xm = (w @ xf) / sw
        ym = (w @ yf) / sw
        sxx = w @ (xf - xm) ** 2
        slope = (w @ ((xf - xm) * (yf - ym))) / sxx if sxx > 1e-12 * sw else 0.0
        out[i] = ym + slope * (x0 - xm)
    return np.exp(out)


def observed_survivorship(deaths, exposure, age_grid) -> np.ndarray:
    """Survivorship implied by observed rates; zero-death ages give ``q = 0``."""
    y, P = np.asarray(deaths, float), np.asarray(exposure, float)
    m = np.divide(y, P, out=np.zeros_like(y), where=P > 0)
    n = age_grid.widths
    a = _separation_factors(m, n)
    q = n[:-1] * m[:-1] / (1.0 + (n[:-1] - a[:-1]) * m[:-1])
    q = np.minimum(q, 1.0)
    l = np.ones_like(m)
    l[1:] = np.cumprod(1.0 - q)
    return l


def fit_brass(deaths, exposure, standard: LifeTable):
    """OLS of observed logit survivorship on the standard's; returns (params, rates)."""
    l_obs = observed_survivorship(deaths, exposure, standard.age_grid)[1:]
    usable = (l_obs > 0) & (l_obs < 1)
    if usable.sum() < 3:
        raise NoFitError("observed survivorship is degenerate (fewer than 3 usable ages)")
    lo = np.clip(l_obs, LOGIT_CLAMP, 1 - LOGIT_CLAMP)
    ys = logit(lo)
    xs = logit(np.clip(standard.l[1:], LOGIT_CLAMP, 1 - LOGIT_CLAMP))
    X = np.column_stack([np.ones_like(xs), xs])
    (alpha, beta), *_ = np.linalg.lstsq(X, ys, rcond=None)
    params = BrassParams(float(alpha), float(beta))
    try:
        rates = brass_rates(standard, params)
    except BrassError as e:
        raise NoFitError(str(e)) from e
    return params, rates


@dataclass(eq=False)
class BenchmarkReport:
    """Mean RMSE per (method, size) and model coverage per (size, level)."""

    rmse: dict  # method -> {size: mean rmse}
    coverage: dict  # size -> {level: coverage}
    no_fit: dict = field(default_factory=dict)  # method -> {size: count of failed fits}
    diagnostics: dict = field(default_factory=dict)

    def rows(self):
        for method, by_size in self.rmse.items():
            for size, v in sorted(by_size.items()):
                yield method, size, "rmse", v
        for size, by_level in sorted(self.coverage.items()):
            for lev, v in sorted(by_level.items()):
                yield "model", size, f"coverage_{int(round(lev * 100))}", v

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("method", "size", "metric", "value"))
            for method, size, metric, v in self.rows():
                w.writerow((method, _fmt_size(size), metric, repr(float(v))))

    def table1(self):
        sizes = sorted(next(iter(self.rmse.values())).keys())
        return [(s, *(self.rmse[m].get(s, np.nan) for m in ("model", "loess", "brass"))) for s in sizes]

    def table2(self):
        return [(s, *(self.coverage[s][lev] for lev in sorted(self.coverage[s]))) for s in sorted(self.coverage)]


def _fmt_size(s):
    return int(s) if float(s).is_integer() else s


def score_fit(log_m_draws, dataset: MortalityDataset, truth, sizes_by_area, standard: LifeTable,
              levels=LEVELS, loess_span=0.75):
    """Score posterior draws and both comparison fits against truth.

    ``log_m_draws`` has shape ``(chains, draws, G, A, T)``.
    """
    G, A, T = dataset.shape
    pooled = np.exp(log_m_draws.reshape((-1,) + log_m_draws.shape[2:]))
    med = quantile(pooled, 0.5, axis=0)
    bounds = {}
    for lev in levels:
        lo, hi = quantile(pooled, [(1 - lev) / 2, 1 - (1 - lev) / 2], axis=0)
        bounds[lev] = (lo, hi)
    model_rmse = rmse(med, truth, axis=0)  # (A, T)

    obs = observed_log_rates(dataset).values
    loess_rmse = np.full((A, T), np.nan)
    brass_rmse = np.full((A, T), np.nan)
    for a in range(A):
        for t in range(T):
            try:
                loess_rmse[a, t] = rmse(fit_loess(obs[:, a, t], loess_span), truth[:, a, t])
            except NoFitError:
                pass
            try:
                _, br = fit_brass(dataset.deaths[:, a, t], dataset.exposure[:, a, t], standard)
                brass_rmse[a, t] = rmse(br, truth[:, a, t])
            except NoFitError:
                pass

    sizes_by_area = np.asarray(sizes_by_area, float)
    sizes = sorted(set(sizes_by_area.tolist()))
    out_rmse = {"model": {}, "loess": {}, "brass": {}}
    no_fit = {"loess": {}, "brass": {}}
    cov = {}
    for s in sizes:
        sel = sizes_by_area == s
        out_rmse["model"][s] = float(model_rmse[sel].mean())
        for name, arr in (("loess", loess_rmse), ("brass", brass_rmse)):
            vals = arr[sel]
            out_rmse[name][s] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else np.nan
            no_fit[name][s] = int(np.isnan(vals).sum())
        cov[s] = {}
        for lev in levels:
            lo, hi = bounds[lev]
            iv = IntervalSet(lo[:, sel], hi[:, sel], np.clip(med[:, sel], lo[:, sel], hi[:, sel]))
            cov[s][lev] = coverage(truth[:, sel], iv)
    return BenchmarkReport(out_rmse, cov, no_fit), med, bounds


def run_benchmark(
    sizes=BENCHMARK_SIZES,
    n_per_size: int = 2,
    years=range(2000, 2010),
    config: SamplerConfig | None = None,
    seed: int = 0,
    basis: PrincipalComponentBasis | None = None,
    standard: LifeTable | None = None,
    levels=LEVELS,
    loess_span: float = 0.75,
    return_fit: bool = False,
):
    """Simulate counties, fit the model and both comparison fits, and score them.

    With ``return_fit`` the dataset, truth and posterior samples are returned
    alongside the report.
    """
    t0 = time.time()
    config = config or SamplerConfig(n_iterations=10000, n_burnin=5000, thin=5, seed=seed)
    standard = standard or standard_lifetable()
    basis = basis or build_basis(reference_schedules(standard, seed=seed), 3)
    counties = make_counties(standard, sizes, n_per_size=n_per_size, seed=seed)
    dataset, truth = simulate_dataset(counties, list(years), seed=seed)
    spec = ModelSpec(basis, dataset)
    samples = run(spec, config)
    log_m = samples.log_rates()
    sizes_by_area = [c.size for c in counties]
    report, med, bounds = score_fit(log_m, dataset, truth, sizes_by_area, standard, levels, loess_span)

    # Posterior median of aggregated expected deaths against the observed aggregate.
    P = dataset.exposure
    agg_draws = np.einsum("xat,cnxat->cnxt", P, np.exp(log_m)).reshape((-1,) + P[:, 0, :].shape)
    agg_med = quantile(agg_draws, 0.5, axis=0)
    Yagg = dataset.aggregate
    lo95 = np.log(bounds[0.95][0])
    hi95 = np.log(bounds[0.95][1])
    width = hi95 - lo95
    sba = np.asarray(sizes_by_area, float)
    report.diagnostics = {
        "rhat_max": float(np.max(gelman_rubin(log_m))),
        "constraint_z_max": float(np.max(np.abs(agg_med - Yagg) / np.sqrt(Yagg + 1))),
        "band_width": {s: float(width[:, sba == s].mean()) for s in sorted(set(sba.tolist()))},
        "acceptance": samples.acceptance_by_block(),
        "seconds": time.time() - t0,
    }
    if return_fit:
        return report, dataset, truth, samples
    return report
