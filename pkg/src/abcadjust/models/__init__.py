"""Generative models: priors, simulators and summary statistics."""

from ..errors import ConfigError
from .base import reference_table, simulate_one
from .birthdeath import (
    SAN_FRANCISCO_CLUSTERS,
    BirthDeathModel,
    cluster_statistics,
    simulate_rates,
)
from .coalescent import CoalescentModel
from .gaussian import ExactGaussianPosterior, GaussianModel, exact_gaussian_posterior

MODELS = {
    "gaussian": GaussianModel,
    "coalescent": CoalescentModel,
    "birthdeath": BirthDeathModel,
    "tuberculosis": BirthDeathModel,
}


def get_model(name, **options):
    try:
        cls = MODELS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**options)


__all__ = [
    "MODELS",
    "get_model",
    "reference_table",
    "simulate_one",
    "GaussianModel",
    "CoalescentModel",
    "BirthDeathModel",
    "ExactGaussianPosterior",
    "exact_gaussian_posterior",
    "simulate_rates",
    "cluster_statistics",
    "SAN_FRANCISCO_CLUSTERS",
]
