"""Bayesian small-area mortality estimation with principal-component age schedules."""

from .core import AgeGrid, DatasetError, MortalityDataset, RateSurface, validate_dataset
from .lifetable import LifeTable, e0_posterior, life_expectancy, rates_to_lifetable, survivorship_to_rates
from .model import ModelParams, ModelSpec, log_likelihood, log_posterior, log_prior
from .pca import PrincipalComponentBasis, ReferenceMatrix, build_basis, svd
from .sampler import SamplerConfig, gelman_rubin, run, summarize

__version__ = "0.1.0"

__all__ = [
    "AgeGrid", "DatasetError", "MortalityDataset", "RateSurface", "validate_dataset",
    "LifeTable", "e0_posterior", "life_expectancy", "rates_to_lifetable", "survivorship_to_rates",
    "ModelParams", "ModelSpec", "log_likelihood", "log_posterior", "log_prior",
    "PrincipalComponentBasis", "ReferenceMatrix", "build_basis", "svd",
    "SamplerConfig", "gelman_rubin", "run", "summarize",
]
