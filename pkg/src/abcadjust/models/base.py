"""Reference-table generation shared by all simulators."""

from concurrent.futures import ProcessPoolExecutor
import math

import numpy as np

from ..errors import ConfigError
from ..reference import ReferenceTable

DEFAULT_BLOCK = 2048


def block_rng(seed, block):
    """Independent generator for block ``block`` of a table with master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def _simulate_block(args):
    model, seed, block, size = args
    return model.simulate(block_rng(seed, block), size)


def reference_table(model, n, seed, workers=1, block_size=DEFAULT_BLOCK):
    """Simulate ``n`` prior-predictive draws from ``model``.

    Draws are generated in fixed blocks of ``block_size`` rows, each with its
    own stream derived from ``(seed, block index)``, so the table does not
    depend on ``workers``.
    """
    n = int(n)
    if n < 1:
        raise ConfigError("n must be positive")
    nblocks = math.ceil(n / block_size)
    jobs = [
        (model, seed, k, min(block_size, n - k * block_size)) for k in range(nblocks)
    ]
    if workers and workers > 1 and nblocks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_block, jobs))
    else:
        parts = [_simulate_block(job) for job in jobs]
    theta = np.vstack([p[0] for p in parts])
    stats = np.vstack([p[1] for p in parts])
    return ReferenceTable(
        theta=theta,
        stats=stats,
        theta_names=list(model.theta_names),
        stat_names=list(model.stat_names),
        meta={
            "model": model.name,
            "seed": int(seed),
            "n": n,
            "block_size": int(block_size),
            "conventions": model.conventions(),
            "supports": support_metadata(model.supports),
        },
    )


def support_metadata(supports):
    """JSON-safe ``{name: [lower, upper]}`` with ``None`` for infinite ends."""
    return {
        k: [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]
        for k, (lo, hi) in supports.items()
    }


def simulate_one(model, seed):
    """One ``(theta, s)`` draw; a pure function of ``seed``."""
    theta, stats = model.simulate(np.random.default_rng(int(seed)), 1)
    return theta[0], stats[0]
