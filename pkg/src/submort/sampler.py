"""Adaptive random-walk Metropolis-within-Gibbs, R-hat and posterior summaries."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernel
from .model import ModelParams, ModelSpec, log_posterior, log_rates

log = logging.getLogger(__name__)

# mu and shift steps are relative to conditional sds (see _kernel); the rest are absolute.
INIT_STEP = {"beta": 0.05, "u": 0.05, "mu": 1.0, "sigma_beta": 0.3, "sigma_mu": 0.3, "sigma_x": 0.3,
             "ridge": 0.05, "shift": 0.1, "beta_scale": 0.1, "u_scale": 0.1}
# Joint moves appended after the parameters, with their own step sizes.
MOVES = ("ridge", "shift", "beta_scale", "u_scale")


class SamplerError(RuntimeError):
    pass


class DiagnosticUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_iterations: int = 20000
    n_burnin: int = 10000
    thin: int = 10
    seed: int = 0
    target_acceptance: float = 0.44
    adaptation_window: int = 50
    threads: int = 1

    def __post_init__(self):
        if not 0 <= self.n_burnin < self.n_iterations:
            raise ValueError("need 0 <= n_burnin < n_iterations")
        if self.thin < 1 or self.n_chains < 1 or self.adaptation_window < 1:
            raise ValueError("thin, n_chains and adaptation_window must be >= 1")

    @property
    def n_saved(self) -> int:
        """Saved draws per chain."""
        return (self.n_iterations - self.n_burnin) // self.thin


def _streams(seed: int, chain: int):
    init_ss, run_ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain),)).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(run_ss)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Least-squares start from imputed observed log-rates, jittered per chain."""
    d = spec.dataset
    y = np.where(d.present, d.deaths, 0.0)
    P = np.where(d.present, d.exposure, 0.0)
    with np.errstate(divide="ignore"):
        z = np.where((y > 0) & (P > 0), np.log(np.where(y > 0, y, 1.0) / np.where(P > 0, P, 1.0)),
                     np.log((y + 0.5) / (P + 1.0)))
    Y = spec.basis.Y
    beta, *_ = np.linalg.lstsq(Y, z.reshape(Y.shape[0], -1), rcond=None)
    G, A, T, p, K = spec.dims
    params = ModelParams.zeros(spec)
    params.beta = beta.reshape(p, A, T)
    gidx = d.group_index
    for k in range(K):
        params.mu[k] = params.beta[:, gidx == k, :].mean(axis=1)
    params.beta = params.beta + rng.normal(0.0, 0.01, params.beta.shape)
    params.mu = params.mu + rng.normal(0.0, 0.01, params.mu.shape)
    return params


@dataclass(eq=False)
class ChainResult:
    draws: np.ndarray  # (n_saved, n_params)
    log_post: np.ndarray
    acceptance: np.ndarray  # post-burn-in acceptance rate per update
    step: np.ndarray
    init: ModelParams


def _layout(spec: ModelSpec, moves: bool = False):
    ref = ModelParams.zeros(spec)
    shapes = [(f, getattr(ref, f).shape) for f in ModelParams.FIELDS]
    if moves:
        shapes += [("ridge", ref.beta.shape), ("shift", ref.mu.shape),
                   ("beta_scale", ref.sigma_beta.shape), ("u_scale", ref.sigma_x.shape)]
    out, i = {}, 0
    for f, shape in shapes:
        n = int(np.prod(shape))
        out[f] = (i, i + n, shape)
        i += n
    return out, i


def _active_mask(spec: ModelSpec, layout, n):
    hyper, ranef = not spec.flat_prior, spec.random_effects
    on = {
        "beta": True, "u": ranef, "mu": hyper, "sigma_beta": hyper, "sigma_mu": hyper,
        "sigma_x": ranef and hyper, "ridge": ranef and hyper, "shift": hyper,
        "beta_scale": hyper, "u_scale": ranef and hyper,
    }
    active = np.zeros(n, bool)
    for f, (lo, hi, _) in layout.items():
        active[lo:hi] = on[f]
    return active


def run_chain(spec: ModelSpec, config: SamplerConfig, chain_index: int = 0) -> ChainResult:
    init_rng, rng = _streams(config.seed, chain_index)
    params = init_params(spec, init_rng)
    lp = log_posterior(params, spec)
    if not np.isfinite(lp):
        raise SamplerError(f"chain {chain_index}: non-finite log posterior at initialization ({lp})")
    n = _layout(spec)[1]
    layout, n_all = _layout(spec, moves=True)
    active = _active_mask(spec, layout, n_all)
    theta = params.flat()
    step = np.zeros(n_all)
    for f, (lo, hi, _) in layout.items():
        step[lo:hi] = INIT_STEP[f]

    d = spec.dataset
    G, A, T, p, K = spec.dims
    P = np.ascontiguousarray(np.where(d.present, d.exposure, 0.0))
    y = np.ascontiguousarray(np.where(d.present, d.deaths, 0.0))
    live = P > 0
    agg = np.ascontiguousarray(d.aggregate, dtype=float)
    agg_live = P.sum(axis=1) > 0
    dims = np.array([G, A, T, p, K], dtype=np.int64)
    flags = np.array([spec.constraint_enabled, spec.random_effects, not spec.flat_prior,
                      spec.sigma_mu_time_varying], dtype=np.bool_)
    Y = np.ascontiguousarray(spec.basis.Y)
    gidx = d.group_index

    n_saved = config.n_saved
    draws = np.empty((n_saved, n))
    lps = np.empty(n_saved)
    acc_post = np.zeros(n_all)
    burn, thin, w = config.n_burnin, config.thin, config.adaptation_window
    it, si, window = 0, 0, 0
    while it < config.n_iterations:
        end = min(it + w, config.n_iterations)
        if it < burn < end:
            end = burn
        m = end - it
        # Caches are rebuilt each chunk so incremental round-off cannot accumulate.
        cur = ModelParams.from_flat(theta, spec)
        eta = np.ascontiguousarray(log_rates(cur, spec))
        with np.errstate(over="ignore", invalid="ignore"):
            mrate = np.exp(eta)
            lam_agg = np.where(live, P * mrate, 0.0).sum(axis=1)
        lp = log_posterior(cur, spec)
        zs = rng.standard_normal((m, n_all))
        logu = np.log(rng.random((m, n_all)))
        gi = np.arange(it, end)
        save_at = (gi >= burn) & ((gi - burn + 1) % thin == 0)
        ns = int(save_at.sum())
        acc = np.zeros(n_all)
        _kernel.run_chunk(theta, step, dims, Y, y, P, live, agg, agg_live, gidx, flags,
                          float(spec.prior_upper), zs, logu, eta, mrate, lam_agg, acc, save_at,
                          draws[si:si + ns], lps[si:si + ns], float(lp))
        si += ns
        if end <= burn:
            window += 1
            rate = acc / m
            gamma = min(1.0, 2.0 / np.sqrt(window))
            step = np.where(active, step * np.exp(gamma * (rate - config.target_acceptance)), step)
        else:
            acc_post += acc
        it = end
    n_post = config.n_iterations - burn
    return ChainResult(draws, lps, np.where(active, acc_post / max(n_post, 1), np.nan), step, params)


@dataclass(eq=False)
class PosteriorSamples:
    """Saved draws, ``draws[chain, draw, scalar]`` in ``ModelParams.flat`` order."""

    spec: ModelSpec
    config: SamplerConfig
    draws: np.ndarray
    log_post: np.ndarray
    acceptance: np.ndarray  # (chain, update); NaN for updates switched off
    step: np.ndarray
    inits: list = field(default_factory=list)

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[1]

    def get(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape ``(chains, draws, *param_shape)``.

        ``name`` is a ``ModelParams`` field or ``"log_m"`` for the log-rates.
        """
        if name == "log_m":
            return self.log_rates()
        layout, _ = _layout(self.spec)
        lo, hi, shape = layout[name]
        return self.draws[:, :, lo:hi].reshape(self.draws.shape[:2] + shape)

    def log_rates(self) -> np.ndarray:
        eta = np.einsum("xp,cnpat->cnxat", self.spec.basis.Y, self.get("beta"))
        if self.spec.random_effects:
            eta = eta + self.get("u")
        return eta

    def params(self, chain: int, draw: int) -> ModelParams:
        return ModelParams.from_flat(self.draws[chain, draw], self.spec)

    def acceptance_by_block(self) -> dict:
        """(min, max) post-burn-in acceptance rate per update type."""
        layout, _ = _layout(self.spec, moves=True)
        out = {}
        for f, (lo, hi, _) in layout.items():
            r = self.acceptance[:, lo:hi]
            if np.all(np.isnan(r)):
                continue
            out[f] = (float(np.nanmin(r)), float(np.nanmax(r)))
        return out

    def parameter_names(self) -> list[str]:
        layout, _ = _layout(self.spec)
        names = []
        for f, (_, _, shape) in layout.items():
            for idx in np.ndindex(*shape):
                names.append(f + "".join(f"[{i}]" for i in idx))
        return names

    def write_trace(self, path):
        names = self.parameter_names()
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("iteration", "chain", "parameter", "value"))
            for c in range(self.n_chains):
                for i in range(self.n_draws):
                    itn = self.config.n_burnin + (i + 1) * self.config.thin
                    for name, v in zip(names, self.draws[c, i]):
                        w.writerow((itn, c, name, repr(float(v))))


def run(spec: ModelSpec, config: SamplerConfig) -> PosteriorSamples:
    def one(c):
        try:
            return run_chain(spec, config, c)
        except SamplerError:
            raise
        except Exception as e:
            raise SamplerError(f"chain {c} failed: {e}") from e

    if config.threads > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(one, range(config.n_chains)))
    else:
        results = [one(c) for c in range(config.n_chains)]
    return PosteriorSamples(
        spec,
        config,
        np.stack([r.draws for r in results]),
        np.stack([r.log_post for r in results]),
        np.stack([r.acceptance for r in results]),
        np.stack([r.step for r in results]),
        [r.init for r in results],
    )


def gelman_rubin(samples, quantity: str | None = None) -> np.ndarray | float:
    """Potential scale reduction factor over axis 0 (chains) and 1 (draws).

    Accepts a ``(chains, draws, ...)`` array or ``PosteriorSamples`` plus a
    quantity name. Zero within-chain variance with distinct chains gives inf.
    """
    x = samples.get(quantity) if isinstance(samples, PosteriorSamples) else np.asarray(samples, float)
    if x.ndim < 2 or x.shape[0] < 2:
        raise DiagnosticUnavailable("Gelman-Rubin needs at least 2 chains")
    n = x.shape[1]
    if n < 2:
        raise DiagnosticUnavailable("Gelman-Rubin needs at least 2 draws per chain")
    means = x.mean(axis=1)
    B = n * means.var(axis=0, ddof=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(((n - 1) / n * W + B / n) / W)
    r = np.where(W > 0, r, np.where(B > 0, np.inf, np.sqrt((n - 1) / n)))
    return float(r) if r.ndim == 0 else r


def quantile(x, q, axis=None):
    """Linear interpolation between order statistics."""
    return np.quantile(np.asarray(x, float), q, axis=axis, method="linear")


@dataclass(eq=False)
class PosteriorSummary:
    median: np.ndarray
    lower: dict
    upper: dict
    rhat: np.ndarray | None

    def interval(self, level=0.95):
        return self.lower[level], self.upper[level]


def summarize(samples, levels=(0.95,), quantity: str | None = None) -> PosteriorSummary:
    """Pooled-chain medians and central intervals, with R-hat when available.

    ``samples`` is ``PosteriorSamples`` (with ``quantity``) or a
    ``(chains, draws, ...)`` array.
    """
    x = samples.get(quantity) if isinstance(samples, PosteriorSamples) else np.asarray(samples, float)
    if x.size == 0:
        raise ValueError("no samples to summarize")
    if x.ndim == 1:
        x = x[None, :]
    pooled = x.reshape((-1,) + x.shape[2:])
    qs = [0.5]
    for lev in levels:
        qs += [(1 - lev) / 2, 1 - (1 - lev) / 2]
    qv = quantile(pooled, qs, axis=0)
    lower = {lev: qv[1 + 2 * i] for i, lev in enumerate(levels)}
    upper = {lev: qv[2 + 2 * i] for i, lev in enumerate(levels)}
    try:
        rhat = gelman_rubin(x)
    except DiagnosticUnavailable:
        rhat = None
    return PosteriorSummary(qv[0], lower, upper, rhat)


def config_dict(config: SamplerConfig) -> dict:
    return asdict(config)
