"""Local polynomial regression at ``s_obs`` and regression adjustment.

A degree-j fit approximates the conditional mean ``m(s)`` around ``s_obs``::

    m0(s) = alpha
    m1(s) = alpha + (s - s_obs)' beta
    m2(s) = alpha + (s - s_obs)' beta + 1/2 (s - s_obs)' gamma (s - s_obs)

and the adjusted draws are ``m_j(s_obs) + (theta_i - m_j(s_i))``.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import EmptyNeighborhoodError, UnderdeterminedRegressionError

__all__ = [
    "DesignMatrix",
    "RegressionFit",
    "AdjustedSample",
    "n_columns",
    "design_matrix",
    "build_design",
    "weighted_least_squares",
    "adjust",
    "fit_and_adjust",
]

DEGREES = (0, 1, 2)


def n_columns(degree, d):
    if degree not in DEGREES:
        raise ValueError(f"degree must be 0, 1 or 2, got {degree}")
    return {0: 1, 1: 1 + d, 2: 1 + d + d * (d + 1) // 2}[degree]


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    degree: int
    dim: int

    @property
    def shape(self):
        return self.matrix.shape


def design_matrix(delta, degree):
    """Design matrix built from the rows ``delta_i = s_i - s_obs``.

    Degree 2 appends ``delta_k^2 / 2`` for the squares and ``delta_k delta_l``
    (k < l) for the cross products, enumerated row-wise over the upper
    triangle: for d=2 the columns are ``1, d1, d2, d1^2/2, d1 d2, d2^2/2``.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 1:
        delta = delta[:, None]
    n, d = delta.shape
    cols = [np.ones((n, 1))]
    if degree >= 1:
        cols.append(delta)
    if degree == 2:
        iu, ju = np.triu_indices(d)
        quad = delta[:, iu] * delta[:, ju]
        quad[:, iu == ju] *= 0.5
        cols.append(quad)
    elif degree not in (0, 1):
        raise ValueError(f"degree must be 0, 1 or 2, got {degree}")
    return DesignMatrix(np.hstack(cols), int(degree), d)


def build_design(accepted, degree):
    """Design matrix for an :class:`~abcadjust.reference.AcceptedSet`."""
    d = accepted.stats.shape[1]
    need = n_columns(degree, d)
    if accepted.n_positive < need:
        raise UnderdeterminedRegressionError(
            f"underdetermined local regression: {accepted.n_positive} points with "
            f"positive weight for {need} coefficients"
        )
    return design_matrix(accepted.delta, degree)


@dataclass
class RegressionFit:
    """Weighted local polynomial fit centred at ``s_obs``.

    Attributes
    ----------
    alpha : float
        Fitted conditional mean at ``s_obs``.
    beta : ndarray, shape (d,)
    gamma : ndarray, shape (d, d)
        Symmetric Hessian of the fit (zero below degree 2).
    wssr : float
        Weighted sum of squared residuals.
    n_effective : int
        Number of rows with non-zero weight.
    rank_deficient : bool
        True when the weighted design did not have full column rank; the
        minimum-norm least-squares solution is returned in that case.
    """

    degree: int
    dim: int
    coef: np.ndarray
    alpha: float
    beta: np.ndarray
    gamma: np.ndarray
    wssr: float
    weight_sum: float
    n_effective: int
    rank: int
    rank_deficient: bool

    @property
    def mean_squared_residual(self):
        return self.wssr / self.weight_sum

    def predict(self, delta):
        """Fitted values at ``s_obs + delta``."""
        return design_matrix(delta, self.degree).matrix @ self.coef


def weighted_least_squares(X, theta, weights, rcond=None):
    """Minimise ``sum_i w_i (theta_i - X_i c)^2``.

    Solved by a rank-revealing least-squares factorisation of the
    ``sqrt(w)``-scaled design rather than by forming ``X'WX``.
    """
    if not isinstance(X, DesignMatrix):
        raise TypeError("X must be a DesignMatrix")
    A = X.matrix
    theta = np.asarray(theta, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if A.shape[0] != theta.size or theta.size != w.size:
        raise ValueError("X, theta and weights must have matching lengths")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    pos = w > 0
    n_eff = int(np.count_nonzero(pos))
    if n_eff == 0:
        raise EmptyNeighborhoodError("empty neighborhood: all weights are zero")
    ncol = A.shape[1]
    if n_eff < ncol:
        raise UnderdeterminedRegressionError(
            f"underdetermined local regression: {n_eff} weighted rows for {ncol} coefficients"
        )
    sw = np.sqrt(w[pos])
    Aw = A[pos] * sw[:, None]
    # column equilibration keeps the rank decision scale-free
    norms = np.linalg.norm(Aw, axis=0)
    norms[norms == 0] = 1.0
    if rcond is None:
        rcond = max(Aw.shape) * np.finfo(float).eps
    sol, _, rank, _ = np.linalg.lstsq(Aw / norms, theta[pos] * sw, rcond=rcond)
    coef = sol / norms
    resid = theta - A @ coef
    wssr = float(np.sum(w * resid**2))
    d = X.dim
    beta = np.zeros(d)
    gamma = np.zeros((d, d))
    if X.degree >= 1:
        beta = coef[1 : 1 + d].copy()
    if X.degree == 2:
        iu, ju = np.triu_indices(d)
        q = coef[1 + d :]
        gamma[iu, ju] = q
        gamma[ju, iu] = q
    deficient = int(rank) < ncol
    if deficient:
        warnings.warn(
            f"rank-deficient local regression (rank {rank} < {ncol}); "
            "using the minimum-norm solution",
            RuntimeWarning,
            stacklevel=2,
        )
    return RegressionFit(
        degree=X.degree,
        dim=d,
        coef=coef,
        alpha=float(coef[0]),
        beta=beta,
        gamma=gamma,
        wssr=wssr,
        weight_sum=float(w.sum()),
        n_effective=n_eff,
        rank=int(rank),
        rank_deficient=deficient,
    )


@dataclass
class AdjustedSample:
    """Weighted (possibly regression-adjusted) draws of one scalar parameter."""

    values: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.values.size != self.weights.size:
            raise ValueError("values and weights must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")

    def __len__(self):
        return self.values.size

    @property
    def n_effective(self):
        """Kish effective sample size ``(sum w)^2 / sum w^2``."""
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w))


def adjust(accepted, fit, theta=None):
    """Regression-adjust the accepted draws of a scalar parameter.

    ``theta`` defaults to ``accepted.theta`` (must then be one-dimensional).
    Degree 0 returns the raw draws.
    """
    if theta is None:
        theta = accepted.theta
    theta = np.asarray(theta, dtype=float)
    if theta.ndim > 1:
        if theta.shape[1] != 1:
            raise ValueError("adjust works on one parameter coordinate at a time")
        theta = theta[:, 0]
    if fit.degree == 0:
        values = theta.copy()
    else:
        # ordered so the shift is exactly zero when s_i == s_obs
        values = theta + (fit.alpha - fit.predict(accepted.delta))
    return AdjustedSample(values, accepted.weights.copy(), fit.degree)


def fit_and_adjust(accepted, theta, degree):
    """Fit the degree-``degree`` local regression and adjust ``theta``."""
    X = build_design(accepted, degree)
    fit = weighted_least_squares(X, theta, accepted.weights)
    return fit, adjust(accepted, fit, theta)
