"""Synthetic counties from a Brass relational model, with Poisson deaths."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .core import AgeGrid, MortalityDataset
from .lifetable import LifeTable, rates_to_lifetable, survivorship_to_rates
from .pca import ReferenceMatrix

log = logging.getLogger(__name__)

BENCHMARK_SIZES = (1000, 5000, 10000, 20000, 100000)
ALPHA_RANGE = (-0.75, 0.75)
BETA_RANGE = (0.7, 1.3)
LOGIT_CLAMP = 1e-9

# Illustrative male period schedule on the default 19-group grid
# (ages 0, 1-4, 5-9, ..., 80-84, 85+); e0 is about 75 years.
STANDARD_RATES = np.array([
    0.0070, 0.00030, 0.00014, 0.00018, 0.00080, 0.00140, 0.00140, 0.00155,
    0.00200, 0.00300, 0.00450, 0.00680, 0.00980, 0.01400, 0.02100, 0.03200,
    0.05000, 0.08000, 0.16000,
])


class BrassError(ValueError):
    pass


@dataclass(frozen=True)
class BrassParams:
    alpha: float = 0.0
    beta: float = 1.0


@dataclass(frozen=True, eq=False)
class SyntheticCounty:
    id: str
    size: float
    population: np.ndarray  # person-years per age group, constant over years
    true_rates: np.ndarray
    params: BrassParams
    seed: tuple
    deaths: np.ndarray | None = None


def standard_lifetable(age_grid: AgeGrid | None = None) -> LifeTable:
    return rates_to_lifetable(STANDARD_RATES, age_grid)


def _clamped_logit(l):
    lc = np.clip(l, LOGIT_CLAMP, 1 - LOGIT_CLAMP)
    if np.any(lc != l):
        log.warning("survivorship clamped into (%g, 1-%g) before logit", LOGIT_CLAMP, LOGIT_CLAMP)
    return logit(lc)


def brass_survivorship(standard_l, params: BrassParams, literal: bool = False) -> np.ndarray:
    """Transform standard survivorship: ``logit(l) = alpha + beta * Y``.

    ``Y`` is the standard's logit survivorship; with ``literal=True`` it is the
    raw standard survivorship instead. ``l_0`` stays pinned at 1.
    """
    std = np.asarray(standard_l, dtype=float)
    x = std[1:] if literal else _clamped_logit(std[1:])
    if params.alpha == 0.0 and params.beta == 1.0 and not literal:
        return std.copy()
    out = np.empty_like(std)
    out[0] = 1.0
    out[1:] = expit(params.alpha + params.beta * x)
    if not (np.all(np.diff(out) < 0) and out[-1] > 0):
        raise BrassError(f"non-monotone survivorship for alpha={params.alpha}, beta={params.beta}")
    return out


def brass_rates(standard: LifeTable, params: BrassParams, literal: bool = False) -> np.ndarray:
    """Rates of a Brass-transformed standard.

    The open-interval rate keeps the standard's ratio to the preceding group.
    """
    if params.alpha == 0.0 and params.beta == 1.0 and not literal:
        return np.array(standard.m, dtype=float)
    l = brass_survivorship(standard.l, params, literal)
    m = survivorship_to_rates(l, 1.0, standard.age_grid)
    m[-1] = m[-2] * standard.m[-1] / standard.m[-2]
    return m


def stationary_age_structure(standard: LifeTable) -> np.ndarray:
    return standard.L / standard.L.sum()


def make_counties(
    standard: LifeTable,
    sizes=BENCHMARK_SIZES,
    age_structure=None,
    n_per_size: int = 12,
    seed: int = 0,
    alpha_range=ALPHA_RANGE,
    beta_range=BETA_RANGE,
    literal: bool = False,
    max_redraws: int = 100,
) -> list[SyntheticCounty]:
    """Counties with uniform-random Brass parameters.

    Each county's randomness is keyed to ``(seed, size, k)`` so the set does
    not depend on the order of ``sizes``.
    """
    shares = stationary_age_structure(standard) if age_structure is None else np.asarray(age_structure, float)
    shares = shares / shares.sum()
    out = []
    for size in sizes:
        if not size > 0:
            raise ValueError(f"county sizes must be positive, got {size}")
        for k in range(n_per_size):
            key = (int(seed), int(size), k)
            rng = np.random.default_rng(np.random.SeedSequence(key))
            for _ in range(max_redraws + 1):
                p = BrassParams(float(rng.uniform(*alpha_range)), float(rng.uniform(*beta_range)))
                try:
                    m = brass_rates(standard, p, literal)
                    break
                except BrassError:
                    continue
            else:
                raise BrassError(f"county size={size} k={k}: no valid Brass draw after {max_redraws} redraws")
            out.append(SyntheticCounty(f"c{int(size)}_{k:02d}", float(size), size * shares, m, p, key))
    return out


def simulate_deaths(county: SyntheticCounty, years, seed: int = 0) -> np.ndarray:
    """Poisson deaths per ``[age, year]`` with mean population x true rate."""
    rng = np.random.default_rng(np.random.SeedSequence(county.seed + (int(seed), 1)))
    lam = np.outer(county.population * county.true_rates, np.ones(len(years)))
    return rng.poisson(lam).astype(float)


def simulate_dataset(counties, years, seed: int = 0, group: str | None = None):
    """Stack simulated counties into a dataset; also returns truth ``[age, area, year]``."""
    years = list(years)
    deaths = np.stack([simulate_deaths(c, years, seed) for c in counties], axis=1)
    expo = np.stack([np.outer(c.population, np.ones(len(years))) for c in counties], axis=1)
    truth = np.stack([np.outer(c.true_rates, np.ones(len(years))) for c in counties], axis=1)
    groups = None if group is None else [group] * len(counties)
    d = MortalityDataset([c.id for c in counties], years, deaths, expo, groups=groups)
    return d, truth


def reference_schedules(
    standard: LifeTable,
    n_states: int = 50,
    n_years: int = 31,
    seed: int = 0,
    noise_sd: float = 0.03,
) -> ReferenceMatrix:
    """Synthetic large-population log-rate schedules (states x years).

    State levels and slopes are Brass perturbations of the standard with a
    steady improvement trend, plus small age-specific noise.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 7)))
    rows, labels = [], []
    for s in range(n_states):
        a0 = rng.uniform(-0.75, 0.5)
        b0 = rng.uniform(0.75, 1.25)
        for t in range(n_years):
            p = BrassParams(a0 + 0.02 * t, b0)
            m = brass_rates(standard, p)
            rows.append(np.log(m) + rng.normal(0.0, noise_sd, m.size))
            labels.append(f"state{s:02d}:{t}")
    return ReferenceMatrix(np.array(rows), standard.age_grid, tuple(labels))
