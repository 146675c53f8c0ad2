"""Smoothing kernels, bandwidth matrices and kernel moment functionals.

Univariate kernels are used for density estimation in parameter space and
as the radial profile of spherically symmetric kernels in summary-statistic
space.  All kernels are normalised densities.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache
import math

import numpy as np
from scipy import integrate, special

from .errors import DegenerateBandwidthError, DegenerateTableError

__all__ = [
    "UnivariateKernel",
    "SphericalKernel",
    "BandwidthMatrix",
    "get_kernel",
    "kernel_weight",
    "bandwidth_from_quantile",
    "standardized_distances",
    "moment_functionals",
    "KERNEL_NAMES",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _gaussian(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def _uniform(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


# name -> (density, support radius, mu2, roughness)
_FAMILIES = {
    "epanechnikov": (_epanechnikov, 1.0, 1.0 / 5.0, 3.0 / 5.0),
    "gaussian": (_gaussian, math.inf, 1.0, 1.0 / (2.0 * math.sqrt(math.pi))),
    "uniform": (_uniform, 1.0, 1.0 / 3.0, 1.0 / 2.0),
}

KERNEL_NAMES = tuple(_FAMILIES)


@dataclass(frozen=True)
class UnivariateKernel:
    """Symmetric univariate kernel density.

    Attributes
    ----------
    name : str
        One of ``"epanechnikov"``, ``"gaussian"`` or ``"uniform"``.
    """

    name: str

    def __post_init__(self):
        if self.name not in _FAMILIES:
            raise ValueError(
                f"unknown kernel {self.name!r}; expected one of {KERNEL_NAMES}"
            )

    def __call__(self, u):
        return _FAMILIES[self.name][0](u)

    @property
    def support(self):
        """Radius of the support (``inf`` for the Gaussian)."""
        return _FAMILIES[self.name][1]

    @property
    def compact(self):
        return math.isfinite(self.support)

    @property
    def mu2(self):
        """Second moment, integral of u^2 k(u)."""
        return _FAMILIES[self.name][2]

    @property
    def roughness(self):
        """Integral of k(u)^2."""
        return _FAMILIES[self.name][3]

    def scaled(self, u, bandwidth):
        """``k(u / h) / h``."""
        return self(np.asarray(u, dtype=float) / bandwidth) / bandwidth


def get_kernel(kernel):
    if isinstance(kernel, UnivariateKernel):
        return kernel
    return UnivariateKernel(str(kernel).lower())


def _unit_sphere_area(d):
    # surface area of the unit sphere in R^d
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@lru_cache(maxsize=None)
def _radial_integral(name, power, squared=False):
    """Integral over r in [0, support] of k1(r)^(1 or 2) * r^power."""
    k = _FAMILIES[name][0]
    upper = _FAMILIES[name][1]
    if squared:
        f = lambda r: float(k(r)) ** 2 * r**power
    else:
        f = lambda r: float(k(r)) * r**power
    val, _ = integrate.quad(f, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@dataclass(frozen=True)
class SphericalKernel:
    """Spherically symmetric d-variate kernel ``K(u) = c_d * k1(||u||)``.

    The normalising constant ``c_d`` makes ``K`` integrate to one over R^d.
    """

    base: UnivariateKernel
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "base", get_kernel(self.base))
        if int(self.dim) < 1:
            raise ValueError("kernel dimension must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))

    @cached_property
    def normalizer(self):
        d = self.dim
        mass = _unit_sphere_area(d) * _radial_integral(self.base.name, d - 1)
        return 1.0 / mass

    @cached_property
    def mu2(self):
        """Per-coordinate second moment; the covariance of K is ``mu2 * I_d``."""
        d = self.dim
        return (
            self.normalizer
            * _unit_sphere_area(d)
            * _radial_integral(self.base.name, d + 1)
            / d
        )

    @cached_property
    def roughness(self):
        d = self.dim
        return (
            self.normalizer**2
            * _unit_sphere_area(d)
            * _radial_integral(self.base.name, d - 1, squared=True)
        )

    @property
    def compact(self):
        return self.base.compact

    def __call__(self, u):
        """Evaluate at points ``u`` of shape ``(..., d)``."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {u.shape}")
        return self.normalizer * self.base(np.linalg.norm(u, axis=-1))

    def radial(self, r):
        """Evaluate at points given by their norm ``r``."""
        return self.normalizer * self.base(r)


@dataclass(frozen=True)
class BandwidthMatrix:
    """Diagonal bandwidth matrix ``B = b * D``.

    Parameters
    ----------
    scale : array_like
        Diagonal of ``D``, one entry per summary statistic, in the units of
        that statistic.
    b : float
        Dimensionless global bandwidth.
    """

    scale: np.ndarray
    b: float

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if scale.ndim != 1:
            raise ValueError("scale must be the diagonal of D")
        if not np.all(np.isfinite(scale)) or np.any(scale <= 0.0):
            raise DegenerateBandwidthError(
                f"degenerate bandwidth: scale entries must be > 0, got {scale}"
            )
        b = float(self.b)
        if not math.isfinite(b) or b <= 0.0:
            raise DegenerateBandwidthError(f"degenerate bandwidth: b = {b}")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.scale.size

    @property
    def diagonal(self):
        return self.b * self.scale

    @property
    def matrix(self):
        return np.diag(self.diagonal)

    @property
    def det(self):
        return self.b**self.dim * float(np.prod(self.scale))

    def standardize(self, delta):
        """``B^{-1} delta`` for rows of ``delta``."""
        return np.asarray(delta, dtype=float) / self.diagonal


def kernel_weight(kernel, bandwidth, delta):
    """Scaled kernel ``|B|^{-1} K(B^{-1} delta)``.

    ``delta`` may be a single vector of length d or an array of shape (n, d);
    a vector of weights is returned in the latter case.
    """
    if not isinstance(bandwidth, BandwidthMatrix):
        raise TypeError("bandwidth must be a BandwidthMatrix")
    det = bandwidth.det
    if not det > 0.0 or not math.isfinite(det):
        raise DegenerateBandwidthError("degenerate bandwidth")
    if not isinstance(kernel, SphericalKernel):
        kernel = SphericalKernel(get_kernel(kernel), bandwidth.dim)
    u = bandwidth.standardize(delta)
    return kernel(u) / det


def standardized_distances(stats, s_obs, scale):
    """Euclidean norm of ``D^{-1}(s_i - s_obs)`` for each row of ``stats``."""
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    delta = (stats - np.asarray(s_obs, dtype=float)) / np.asarray(scale, dtype=float)
    return np.sqrt(np.einsum("ij,ij->i", delta, delta))


def bandwidth_from_quantile(distances, q):
    """Lower empirical q-quantile of ``distances``.

    Returns the order statistic of rank ``ceil(q * n)`` so the number of
    points at or inside the returned radius is deterministic.
    """
    distances = np.asarray(distances, dtype=float).ravel()
    if distances.size == 0:
        raise ValueError("distances must be non-empty")
    if not np.all(np.isfinite(distances)):
        raise ValueError("distances must be finite")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if np.all(distances == 0.0):
        raise DegenerateTableError("degenerate reference table: all distances are zero")
    n = distances.size
    # guard against q*n landing a hair above an integer
    rank = max(1, math.ceil(q * n - 1e-9))
    return float(np.partition(distances, rank - 1)[rank - 1])


def moment_functionals(kernel):
    """Return ``(mu2, R)`` for a univariate or spherical kernel."""
    if isinstance(kernel, SphericalKernel):
        return kernel.mu2, kernel.roughness
    kernel = get_kernel(kernel)
    return kernel.mu2, kernel.roughness


def quadrature_moments(kernel):
    """Numerically integrate ``(int k, int u k, int u^2 k, int k^2)``.

    Independent of the analytic constants in :func:`moment_functionals`;
    used to validate them.
    """
    kernel = get_kernel(kernel)
    lim = kernel.support
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    f = lambda u: float(kernel(u))
    if math.isfinite(lim):
        parts = [(-lim, 0.0), (0.0, lim)]
    else:
        parts = [(-np.inf, 0.0), (0.0, np.inf)]

    def integral(g):
        return sum(integrate.quad(g, a, b_, **opts)[0] for a, b_ in parts)

    return (
        integral(f),
        integral(lambda u: u * f(u)),
        integral(lambda u: u * u * f(u)),
        integral(lambda u: f(u) ** 2),
    )


def unit_ball_volume(d):
    """Lebesgue volume of the unit ball in R^d."""
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0)
