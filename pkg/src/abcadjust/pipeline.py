"""End-to-end estimation for one scalar parameter."""

from dataclasses import dataclass

import numpy as np

from .estimators import PosteriorEstimate, estimate_density
from .reference import AcceptedSet, accept
from .regression import RegressionFit, fit_and_adjust
from .selection import DEFAULT_MAX_DROP, SelectionReport, select
from .transforms import ParamTransform, StatTransform

__all__ = ["AbcResult", "abc_posterior", "analyze"]


@dataclass
class AbcResult:
    estimate: PosteriorEstimate
    fit: RegressionFit
    accepted: AcceptedSet
    stat_transform: StatTransform
    n_dropped: int


def abc_posterior(
    theta,
    stats,
    s_obs,
    degree=1,
    stat_transform=None,
    param_transform=None,
    q=0.025,
    kernel="epanechnikov",
    ktilde="epanechnikov",
    b_prime=None,
    n_grid=512,
    max_drop=DEFAULT_MAX_DROP,
):
    """Estimate ``g(theta | s_obs)`` with estimator ``degree`` (0, 1 or 2).

    Statistics are transformed, rows outside the transform's domain are
    dropped, ``B = b D`` is set from the transformed table, the parameter is
    transformed, the local fit is adjusted and the density is estimated in
    the transformed scale and mapped back.
    """
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    theta = np.asarray(theta, dtype=float).ravel()
    stat_transform = (
        StatTransform.parse(stat_transform)
        if stat_transform is not None
        else StatTransform.identity(stats.shape[1])
    )
    param_transform = param_transform or ParamTransform()
    mask, S, so = stat_transform.prepare(stats, s_obs, max_drop=max_drop)
    th = param_transform.forward(theta[mask])
    acc = accept(S, so, q=q, kernel=kernel, theta=th)
    fit, sample = fit_and_adjust(acc, acc.theta, degree)
    est = estimate_density(
        sample, ktilde=ktilde, b_prime=b_prime, transform=param_transform, n_grid=n_grid
    )
    return AbcResult(est, fit, acc, stat_transform, int(mask.size - mask.sum()))


def analyze(
    theta,
    stats,
    s_obs,
    param_transform=None,
    transform="auto",
    degree="auto",
    q=0.025,
    kernel="epanechnikov",
    ktilde="epanechnikov",
    b_prime=None,
    stat_names=None,
    param_name="theta",
    cv_subsample=1000,
    seed=0,
    max_drop=DEFAULT_MAX_DROP,
    folds="all",
):
    """Select transform and degree (unless fixed), then estimate.

    Returns ``(AbcResult, SelectionReport)``.
    """
    report: SelectionReport = select(
        theta,
        stats,
        s_obs,
        q=q,
        param_transform=param_transform,
        transform=transform,
        degree=degree,
        kernel=kernel,
        stat_names=stat_names,
        param_name=param_name,
        cv_subsample=cv_subsample,
        seed=seed,
        max_drop=max_drop,
        folds=folds,
    )
    result = abc_posterior(
        theta,
        stats,
        s_obs,
        degree=report.chosen_degree,
        stat_transform=report.chosen_transform,
        param_transform=param_transform,
        q=q,
        kernel=kernel,
        ktilde=ktilde,
        b_prime=b_prime,
        max_drop=max_drop,
    )
    return result, report
