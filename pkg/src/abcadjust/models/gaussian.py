"""Gaussian sample with a conjugate Normal / scaled-inverse-chi-square prior."""

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats as st

from .base import simulate_one

IRIS_VIRGINICA_PETAL = (5.552, 0.304)


@dataclass(frozen=True)
class GaussianModel:
    """``sigma2 ~ Inv-chi2(1)``, ``mu | sigma2 ~ N(0, sigma2)``, N iid normal draws.

    Statistics are the sample mean and the unbiased sample variance
    (divisor ``N - 1``).  ``sigma2`` pins the variance (test hook).
    """

    N: int = 50
    sigma2: float = None

    name = "gaussian"
    theta_names = ("sigma2",)
    stat_names = ("xbar", "s2")
    supports = {"sigma2": (0.0, math.inf)}
    observed = IRIS_VIRGINICA_PETAL

    def conventions(self):
        return {"N": self.N, "variance_divisor": "N-1", "prior": "sigma2~Inv-chi2(1), mu~N(0,sigma2)"}

    def simulate(self, rng, size):
        if self.sigma2 is None:
            sigma2 = 1.0 / rng.chisquare(1.0, size)
        else:
            sigma2 = np.full(size, float(self.sigma2))
        sd = np.sqrt(sigma2)
        mu = rng.normal(0.0, sd)
        x = rng.normal(mu[:, None], sd[:, None], (size, self.N))
        xbar = x.mean(axis=1)
        s2 = x.var(axis=1, ddof=1)
        return sigma2[:, None], np.column_stack([xbar, s2])

    def simulate_one(self, seed):
        return simulate_one(self, seed)


@dataclass(frozen=True)
class ExactGaussianPosterior:
    """Scaled inverse-chi-square law ``Inv-chi2(df, scale)`` of ``sigma2``."""

    df: float
    scale: float

    @property
    def _dist(self):
        return st.invgamma(a=self.df / 2.0, scale=self.df * self.scale / 2.0)

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def ppf(self, p):
        return self._dist.ppf(p)

    def quantiles(self, probs):
        return self.ppf(np.asarray(probs, dtype=float))


def exact_gaussian_posterior(xbar, s2, N, nu0=1.0, sigma0_sq=1.0, kappa0=1.0, mu0=0.0):
    """Marginal posterior of ``sigma2`` under the Normal / Inv-chi2 prior.

    With prior ``sigma2 ~ Inv-chi2(nu0, sigma0_sq)`` and ``mu | sigma2 ~
    N(mu0, sigma2 / kappa0)`` the posterior is ``Inv-chi2(nu0 + N, scale)``
    with ``scale = (nu0 sigma0_sq + (N-1) s2 + kappa0 N/(kappa0+N) (xbar-mu0)^2)
    / (nu0 + N)``; ``s2`` uses the ``N - 1`` divisor.
    """
    if not s2 > 0:
        raise ValueError("s2 must be positive")
    df = nu0 + N
    ss = nu0 * sigma0_sq + (N - 1) * s2 + kappa0 * N / (kappa0 + N) * (xbar - mu0) ** 2
    return ExactGaussianPosterior(df=float(df), scale=float(ss / df))
