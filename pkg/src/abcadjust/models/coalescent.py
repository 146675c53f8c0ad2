"""Kingman coalescent with infinitely-many-sites mutation."""

from dataclasses import dataclass
import math

import numpy as np

from .base import simulate_one

COX_OBSERVED = (6.0, 2.10)  # (S, rho)


@dataclass(frozen=True)
class CoalescentModel:
    """TMRCA of ``m`` sequences under a constant-size coalescent.

    ``N ~ U(0, N_max)``; while ``k`` lineages remain the waiting time is
    exponential with rate ``k(k-1)/(2N)`` generations and a uniformly chosen
    pair merges.  Mutations fall on every branch as a Poisson process of
    rate ``u``.  Statistics: ``S``, the number of segregating sites (= number
    of mutations), and ``rho``, the mean number of mutations between the
    root and a sampled sequence.  ``N`` pins the population size (test hook).
    """

    m: int = 10
    u: float = 1.8e-3
    N_max: float = 10000.0
    N: float = None

    name = "coalescent"
    theta_names = ("tmrca",)
    stat_names = ("S", "rho")
    supports = {"tmrca": (0.0, math.inf)}
    observed = COX_OBSERVED

    def conventions(self):
        return {"m": self.m, "u": self.u, "N_prior": f"U(0,{self.N_max:g})"}

    def simulate(self, rng, size):
        return self.simulate_detailed(rng, size)[:2]

    def simulate_detailed(self, rng, size):
        """Like :meth:`simulate` but also returns ``N`` and total branch length."""
        m = self.m
        if self.N is None:
            N = rng.uniform(0.0, self.N_max, size)
        else:
            N = np.full(size, float(self.N))
        rows = np.arange(size)
        leaves = np.ones((size, m))
        birth = np.zeros((size, m))
        t = np.zeros(size)
        S = np.zeros(size)
        rho_num = np.zeros(size)
        total = np.zeros(size)
        for k in range(m, 1, -1):
            t = t + rng.exponential(2.0 * N / (k * (k - 1)))
            i = rng.integers(0, k, size)
            j = rng.integers(0, k - 1, size)
            j = j + (j >= i)
            for idx in (i, j):
                length = t - birth[rows, idx]
                muts = rng.poisson(self.u * length)
                S += muts
                rho_num += muts * leaves[rows, idx]
                total += length
            lo, hi = np.minimum(i, j), np.maximum(i, j)
            merged = leaves[rows, i] + leaves[rows, j]
            # merged lineage takes slot lo, the last active slot fills hi
            leaves[rows, lo] = merged
            birth[rows, lo] = t
            leaves[rows, hi] = leaves[rows, k - 1]
            birth[rows, hi] = birth[rows, k - 1]
        theta = t[:, None]
        stats = np.column_stack([S, rho_num / m])
        return theta, stats, N, total

    def simulate_one(self, seed):
        return simulate_one(self, seed)
