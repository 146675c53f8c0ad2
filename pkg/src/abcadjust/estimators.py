"""Kernel estimators of the partial posterior density and their summaries.

Given weighted draws ``v_i`` (raw, linearly or quadratically adjusted) the
density estimate at ``theta`` is::

    g(theta | s_obs) = sum_i w_i Kt_{b'}(v_i - theta) / sum_i w_i

The estimator index (0, 1, 2) is carried by the sample's adjustment degree.
"""

from dataclasses import dataclass, field
import csv
import io

import numpy as np

from .errors import DegenerateSampleError, EmptyNeighborhoodError
from .kernels import get_kernel
from .regression import AdjustedSample
from .transforms import ParamTransform

__all__ = [
    "PosteriorEstimate",
    "estimate_density",
    "kde",
    "weighted_quantiles",
    "posterior_mode",
    "silverman_bandwidth",
    "weighted_mean_std",
    "DEFAULT_PROBS",
]

DEFAULT_PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)
DEFAULT_GRID_SIZE = 512


def weighted_quantiles(values, weights, probs):
    """Weighted empirical quantiles (left-continuous inverse of the weighted CDF).

    Returns, for each ``p``, the smallest value whose cumulative normalised
    weight reaches ``p``.
    """
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    if np.any((probs <= 0) | (probs >= 1)):
        raise ValueError("probabilities must lie in (0, 1)")
    keep = weights > 0
    if not np.any(keep):
        raise EmptyNeighborhoodError("empty neighborhood: all weights are zero")
    v, w = values[keep], weights[keep]
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cum = np.cumsum(w)
    idx = np.searchsorted(cum, probs * cum[-1], side="left")
    return v[np.minimum(idx, v.size - 1)]


def weighted_mean_std(values, weights):
    values = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    tot = w.sum()
    mean = float(np.sum(w * values) / tot)
    var = float(np.sum(w * (values - mean) ** 2) / tot)
    return mean, np.sqrt(var)


def silverman_bandwidth(sample):
    """Silverman's rule for a weighted sample.

    ``0.9 * min(sd, IQR / 1.34) * n_eff^(-1/5)`` with weighted sd and IQR and
    Kish effective size ``n_eff``.  When the weighted IQR is zero the sd is
    used alone.
    """
    keep = sample.weights > 0
    if not np.any(keep):
        raise EmptyNeighborhoodError("empty neighborhood: all weights are zero")
    v, w = sample.values[keep], sample.weights[keep]
    n_eff = float(w.sum() ** 2 / np.sum(w * w))
    if n_eff < 1.0 + 1e-3:
        raise DegenerateSampleError(
            f"degenerate sample: weight concentrated on one draw (n_eff = {n_eff:.6f})"
        )
    _, sd = weighted_mean_std(v, w)
    q25, q75 = weighted_quantiles(v, w, [0.25, 0.75])
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if not spread > 0:
        raise DegenerateSampleError("degenerate sample: zero spread")
    return 0.9 * spread * n_eff ** (-0.2)


def kde(values, weights, grid, kernel, bandwidth):
    """Weighted kernel density estimate evaluated on ``grid``."""
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    kernel = get_kernel(kernel)
    keep = weights > 0
    if not np.any(keep):
        raise EmptyNeighborhoodError("empty neighborhood: all weights are zero")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    v, w = values[keep], weights[keep]
    flat = grid.ravel()
    out = np.empty(flat.size)
    # chunk the grid so the (n, chunk) kernel matrix stays small
    step = max(1, 2**22 // max(v.size, 1))
    for lo in range(0, flat.size, step):
        g = flat[lo : lo + step]
        k = kernel((v[:, None] - g[None, :]) / bandwidth)
        out[lo : lo + step] = w @ k
    out /= w.sum() * bandwidth
    return out.reshape(grid.shape)


@dataclass
class PosteriorEstimate:
    """Density estimate of one scalar parameter.

    ``sample`` and ``grid_transformed`` live in the regression (transformed)
    scale; ``grid`` and ``density`` are on the original parameter scale.
    """

    estimator: int
    sample: AdjustedSample
    grid_transformed: np.ndarray
    density_transformed: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    b_prime: float
    kernel: str
    transform: ParamTransform = field(default_factory=ParamTransform)

    def quantiles(self, probs=DEFAULT_PROBS):
        q = weighted_quantiles(self.sample.values, self.sample.weights, probs)
        return self.transform.inverse(q)

    def mode(self):
        return posterior_mode(self)

    def credible_interval(self, level=0.95):
        a = (1.0 - level) / 2.0
        lo, hi = self.quantiles([a, 1.0 - a])
        return float(lo), float(hi)

    def values(self):
        """Adjusted draws on the original parameter scale."""
        return self.transform.inverse(self.sample.values)

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))

    def summary(self, probs=DEFAULT_PROBS):
        qs = self.quantiles(probs)
        return {
            "estimator": self.estimator,
            "mode": float(self.mode()),
            "quantiles": {repr(float(p)): float(v) for p, v in zip(probs, qs)},
            "ci95": list(self.credible_interval(0.95)),
            "b_prime": self.b_prime,
            "kernel": self.kernel,
            "parameter_transform": str(self.transform),
        }

    def to_csv_text(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["theta", "density"])
        for t, g in zip(self.grid, self.density):
            writer.writerow([repr(float(t)), repr(float(g))])
        return buf.getvalue()


def estimate_density(
    sample,
    ktilde="epanechnikov",
    b_prime=None,
    grid=None,
    transform=None,
    n_grid=DEFAULT_GRID_SIZE,
):
    """Estimate the partial posterior density from a weighted sample.

    Parameters
    ----------
    sample : AdjustedSample
        Draws in the regression scale (after any parameter transform).
    ktilde : str
        Kernel used in parameter space.
    b_prime : float, optional
        Bandwidth in parameter space; Silverman's rule when omitted.
    grid : array_like, optional
        Evaluation points in the regression scale.  Defaults to ``n_grid``
        equally spaced points covering the draws plus ``3 b'`` either side.
    transform : ParamTransform, optional
        Parameter transform used before adjustment.  The density is mapped
        back to the original scale with the Jacobian of the transform.
    """
    if not isinstance(sample, AdjustedSample):
        raise TypeError("sample must be an AdjustedSample")
    if not np.any(sample.weights > 0):
        raise EmptyNeighborhoodError("empty neighborhood: all weights are zero")
    transform = transform or ParamTransform()
    kern = get_kernel(ktilde)
    if b_prime is None:
        b_prime = silverman_bandwidth(sample)
    b_prime = float(b_prime)
    if not b_prime > 0:
        raise ValueError("b_prime must be positive")
    if grid is None:
        v = sample.values[sample.weights > 0]
        grid = np.linspace(v.min() - 3 * b_prime, v.max() + 3 * b_prime, int(n_grid))
    grid = np.asarray(grid, dtype=float)
    dens_t = kde(sample.values, sample.weights, grid, kern, b_prime)
    theta = transform.inverse(grid)
    dens = dens_t * np.exp(transform.log_abs_derivative(theta))
    return PosteriorEstimate(
        estimator=sample.degree,
        sample=sample,
        grid_transformed=grid,
        density_transformed=dens_t,
        grid=theta,
        density=dens,
        b_prime=b_prime,
        kernel=kern.name,
        transform=transform,
    )


def posterior_mode(estimate):
    """Grid argmax of the density; ties go to the smallest ``theta``."""
    grid = np.asarray(estimate.grid)
    dens = np.asarray(estimate.density)
    if grid.size == 0:
        raise ValueError("empty density grid")
    top = dens.max()
    candidates = grid[dens == top]
    return float(candidates.min())
