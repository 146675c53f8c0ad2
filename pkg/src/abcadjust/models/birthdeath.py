"""Birth, death and infinitely-many-alleles mutation of tuberculosis genotypes.

Every case gives birth, dies or mutates to a brand-new genotype with
per-capita rates ``alpha``, ``delta`` and ``theta_mut``.  Only the state at
the time the population first reaches ``stop`` cases matters, so the
embedded jump chain is simulated: each step picks a case uniformly and an
event type with probabilities proportional to the rates.
"""

from dataclasses import dataclass
import math

import numba
import numpy as np

from .base import simulate_one

# San Francisco IS6110 clusters, size -> number of clusters
SAN_FRANCISCO_CLUSTERS = {30: 1, 23: 1, 15: 1, 10: 1, 8: 1, 5: 2, 4: 4, 3: 13, 2: 20, 1: 282}


def cluster_statistics(clusters):
    """``(G, H)`` for a ``{cluster size: count}`` configuration."""
    n = sum(size * count for size, count in clusters.items())
    G = sum(clusters.values())
    H = sum(count * (size / n) ** 2 for size, count in clusters.items())
    return float(G), float(H)


@numba.njit(cache=True)
def _trajectory(alpha, delta, theta_mut, seed, stop, sample_size, max_restarts):
    np.random.seed(seed)
    total = alpha + delta + theta_mut
    p_birth = alpha / total
    p_death = (alpha + delta) / total
    labels = np.empty(stop, np.int64)
    restarts = 0
    births = 0
    deaths = 0
    muts = 0
    while True:
        N = 1
        labels[0] = 0
        next_label = 1
        births = 0
        deaths = 0
        muts = 0
        while N > 0 and N < stop:
            r = np.random.random()
            k = np.random.randint(0, N)
            if r < p_birth:
                labels[N] = labels[k]
                N += 1
                births += 1
            elif r < p_death:
                labels[k] = labels[N - 1]
                N -= 1
                deaths += 1
            else:
                labels[k] = next_label
                next_label += 1
                muts += 1
        if N == stop:
            break
        restarts += 1
        if restarts > max_restarts:
            return -1, -1.0, births, deaths, muts, restarts
    # partial Fisher-Yates: sample without replacement
    for s in range(sample_size):
        j = np.random.randint(s, stop)
        tmp = labels[s]
        labels[s] = labels[j]
        labels[j] = tmp
    samp = np.sort(labels[:sample_size])
    G = 1
    run = 1
    sumsq = 0.0
    for s in range(1, sample_size):
        if samp[s] == samp[s - 1]:
            run += 1
        else:
            sumsq += run * run
            run = 1
            G += 1
    sumsq += run * run
    return G, sumsq / (sample_size * sample_size), births, deaths, muts, restarts


@dataclass
class Trajectory:
    G: int
    H: float
    births: int
    deaths: int
    mutations: int
    restarts: int


def simulate_rates(alpha, delta, theta_mut, seed, stop=10000, sample_size=473, max_restarts=10**6):
    """Run the process with fixed rates until ``stop`` cases, then sample.

    Extinct trajectories are restarted from one case with the same rates.
    """
    if not alpha > 0 or delta < 0 or theta_mut < 0:
        raise ValueError("need alpha > 0, delta >= 0, theta_mut >= 0")
    if sample_size > stop:
        raise ValueError("sample_size cannot exceed the final population")
    G, H, b, d, m, r = _trajectory(
        float(alpha), float(delta), float(theta_mut), int(seed) % (2**32),
        int(stop), int(sample_size), int(max_restarts),
    )
    if G < 0:
        raise RuntimeError(f"trajectory went extinct more than {max_restarts} times")
    return Trajectory(int(G), float(H), int(b), int(d), int(m), int(r))


@dataclass(frozen=True)
class BirthDeathModel:
    """Tuberculosis transmission model.

    Prior: ``theta_mut ~ N(0.20, 0.07^2)`` and the normalised rate triple
    ``(alpha, delta, theta_mut) / (alpha + delta + theta_mut) ~ Dir(1,1,1)``
    conditioned on ``delta < alpha``.  Both are drawn (jointly rejecting
    non-positive ``theta_mut``) and the absolute rates are set to
    ``theta_mut * (p_alpha, p_delta) / p_theta``.

    Parameters returned: net transmission rate ``alpha - delta``, doubling
    time ``log 2 / (alpha - delta)`` and ``R0 = alpha / delta``.
    Statistics: number of genotypes ``G`` and homozygosity ``H`` in a
    sample of ``sample_size`` cases.
    """

    stop: int = 10000
    sample_size: int = 473
    mut_mean: float = 0.20
    mut_sd: float = 0.07
    max_prior_tries: int = 10**5
    max_restarts: int = 10**6

    name = "birthdeath"
    theta_names = ("transmission_rate", "doubling_time", "R0")
    stat_names = ("G", "H")
    supports = {
        "transmission_rate": (0.0, math.inf),
        "doubling_time": (0.0, math.inf),
        "R0": (0.0, math.inf),
    }
    observed = cluster_statistics(SAN_FRANCISCO_CLUSTERS)

    def conventions(self):
        return {
            "stop": self.stop,
            "sample_size": self.sample_size,
            "prior": "theta~N(0.20,0.07^2)>0, Dir(1,1,1)|delta<alpha, rates=theta*p/p_theta",
        }

    def draw_rates(self, rng):
        for _ in range(self.max_prior_tries):
            th = rng.normal(self.mut_mean, self.mut_sd)
            p = rng.dirichlet((1.0, 1.0, 1.0))
            if th > 0 and p[1] < p[0]:
                return th * p[0] / p[2], th * p[1] / p[2], th
        raise RuntimeError(
            f"rate prior rejected {self.max_prior_tries} draws in a row; check the prior"
        )

    def simulate(self, rng, size):
        theta = np.empty((size, 3))
        stats = np.empty((size, 2))
        for i in range(size):
            alpha, delta, th = self.draw_rates(rng)
            seed = int(rng.integers(0, 2**32 - 1))
            traj = simulate_rates(
                alpha, delta, th, seed, self.stop, self.sample_size, self.max_restarts
            )
            r = alpha - delta
            theta[i] = (r, math.log(2.0) / r, alpha / delta)
            stats[i] = (traj.G, traj.H)
        return theta, stats

    def simulate_one(self, seed):
        return simulate_one(self, seed)
