"""Joint density of the hierarchical principal-component mortality model.

Array layouts (``G`` ages, ``A`` areas, ``T`` years, ``p`` components,
``K`` pooling groups)::

    beta        (p, A, T)
    mu          (K, p, T)
    sigma_beta  (K, p, T)
    sigma_mu    (K, p)     or (K, p, T) when time-varying
    sigma_x     (G,)
    u           (G, A, T)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .core import MortalityDataset
from .pca import PrincipalComponentBasis

LOG_2PI = float(np.log(2 * np.pi))
DIFFUSE_SD = 100.0


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    basis: PrincipalComponentBasis
    dataset: MortalityDataset
    constraint_enabled: bool = True
    prior_upper: float = 40.0
    sigma_mu_time_varying: bool = False
    random_effects: bool = True
    # Improper flat prior on beta, no hierarchy; only beta is sampled.
    flat_prior: bool = False

    def __post_init__(self):
        if self.basis.age_grid != self.dataset.age_grid:
            raise ModelError("basis and dataset age grids differ")
        if self.flat_prior and self.random_effects:
            raise ModelError("flat_prior requires random_effects=False (u would be improper)")

    @property
    def dims(self):
        G, A, T = self.dataset.shape
        return G, A, T, self.basis.p, len(self.dataset.group_labels)


@dataclass(eq=False)
class ModelParams:
    beta: np.ndarray
    mu: np.ndarray
    sigma_beta: np.ndarray
    sigma_mu: np.ndarray
    sigma_x: np.ndarray
    u: np.ndarray

    FIELDS = ("beta", "u", "mu", "sigma_beta", "sigma_mu", "sigma_x")

    def copy(self) -> "ModelParams":
        return ModelParams(**{f: np.array(getattr(self, f), dtype=float) for f in self.FIELDS})

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ModelParams":
        G, A, T, p, K = spec.dims
        sm = (K, p, T) if spec.sigma_mu_time_varying else (K, p)
        return cls(
            beta=np.zeros((p, A, T)),
            mu=np.zeros((K, p, T)),
            sigma_beta=np.ones((K, p, T)),
            sigma_mu=np.ones(sm),
            sigma_x=np.ones(G),
            u=np.zeros((G, A, T)),
        )

    def shapes_ok(self, spec: ModelSpec) -> bool:
        ref = ModelParams.zeros(spec)
        return all(np.shape(getattr(self, f)) == getattr(ref, f).shape for f in self.FIELDS)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, f)) for f in self.FIELDS])

    @classmethod
    def from_flat(cls, vec, spec: ModelSpec) -> "ModelParams":
        ref = cls.zeros(spec)
        out, i = {}, 0
        for f in cls.FIELDS:
            shape = getattr(ref, f).shape
            n = int(np.prod(shape))
            out[f] = np.array(vec[i:i + n], dtype=float).reshape(shape)
            i += n
        return cls(**out)

    def with_(self, **kw) -> "ModelParams":
        return replace(self.copy(), **kw)


def _norm_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI


def log_rates(params: ModelParams, spec: ModelSpec) -> np.ndarray:
    """Log mortality for every cell, shape ``(G, A, T)``."""
    eta = np.einsum("xp,pat->xat", spec.basis.Y, params.beta)
    if spec.random_effects:
        eta = eta + params.u
    return eta


def log_rate(params: ModelParams, spec: ModelSpec, x: int, a: int, t: int) -> float:
    G, A, T, p, _ = spec.dims
    for i, n in ((x, G), (a, A), (t, T)):
        if not 0 <= i < n:
            raise IndexError(f"index {(x, a, t)} out of range for dims {(G, A, T)}")
    val = float(spec.basis.Y[x] @ params.beta[:, a, t])
    if spec.random_effects:
        val += float(params.u[x, a, t])
    return val


def _poisson_terms(y, lam):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(y > 0, y * np.log(lam), 0.0) - lam - gammaln(y + 1)


def log_likelihood(params: ModelParams, spec: ModelSpec) -> float:
    d = spec.dataset
    P = np.where(d.present, d.exposure, 0.0)
    y = np.where(d.present, d.deaths, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        lam = P * np.exp(log_rates(params, spec))
    live = P > 0
    if np.any(live & ~np.isfinite(lam)):
        return -np.inf
    total = float(np.sum(_poisson_terms(y[live], lam[live])))
    if spec.constraint_enabled:
        lam_agg = np.where(live, lam, 0.0).sum(axis=1)
        agg = d.aggregate
        ok = P.sum(axis=1) > 0
        total += float(np.sum(_poisson_terms(agg[ok], lam_agg[ok])))
    return total if np.isfinite(total) else -np.inf


def log_prior(params: ModelParams, spec: ModelSpec) -> float:
    if spec.flat_prior:
        return 0.0
    sigmas = [params.sigma_beta, params.sigma_mu]
    if spec.random_effects:
        sigmas.append(params.sigma_x)
    for s in sigmas:
        if np.any(~(s > 0)) or np.any(s > spec.prior_upper):
            return -np.inf
    gidx = spec.dataset.group_index
    mu_a = params.mu[gidx].transpose(1, 0, 2)  # (p, A, T)
    sb_a = params.sigma_beta[gidx].transpose(1, 0, 2)
    lp = float(np.sum(_norm_logpdf(params.beta, mu_a, sb_a)))
    mu = params.mu
    T = mu.shape[2]
    lp += float(np.sum(_norm_logpdf(mu[:, :, : min(T, 2)], 0.0, DIFFUSE_SD)))
    if T > 2:
        pred = 2 * mu[:, :, 1:-1] - mu[:, :, :-2]
        sm = params.sigma_mu[:, :, 2:] if spec.sigma_mu_time_varying else params.sigma_mu[:, :, None]
        lp += float(np.sum(_norm_logpdf(mu[:, :, 2:], pred, sm)))
    if spec.random_effects:
        lp += float(np.sum(_norm_logpdf(params.u, 0.0, params.sigma_x[:, None, None])))
    return lp


def log_posterior(params: ModelParams, spec: ModelSpec) -> float:
    lp = log_prior(params, spec)
    if lp == -np.inf:
        return -np.inf
    ll = log_likelihood(params, spec)
    return lp + ll if np.isfinite(ll) else -np.inf
