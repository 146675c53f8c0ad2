"""Choosing the regression model.

Two criteria are provided:

* the transformation of the summary statistics is chosen by minimising the
  weighted sum of squared residuals of a local-linear fit computed with a
  uniform kernel, so that the residual scale is comparable across
  transformations;
* the degree of the local polynomial (and hence the estimator) is chosen by
  leave-one-out prediction error.
"""

from dataclasses import dataclass, field
import itertools
import json
import warnings

import numpy as np

from .errors import (
    ConfigError,
    EmptyNeighborhoodError,
    NumericalError,
    TransformNotApplicable,
    UnderdeterminedRegressionError,
)
from .kernels import (
    BandwidthMatrix,
    SphericalKernel,
    get_kernel,
    kernel_weight,
    standardized_distances,
)
from .reference import accept, statistic_scale
from .regression import design_matrix, n_columns, weighted_least_squares
from .transforms import STAT_TAGS, ParamTransform, StatTransform

__all__ = [
    "CandidateScore",
    "CVResult",
    "SelectionReport",
    "wssr_score",
    "search_transforms",
    "cv_scores",
    "cv_score",
    "select",
]

EXHAUSTIVE_LIMIT = 729
DEFAULT_MAX_DROP = 0.1


def _prepare(theta, stats, s_obs, transform, param_transform, max_drop):
    theta = np.asarray(theta, dtype=float).ravel()
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    mask, S, so = transform.prepare(stats, s_obs, max_drop=max_drop)
    th = (param_transform or ParamTransform()).forward(theta[mask])
    return th, S, so, int(mask.size - mask.sum())


def wssr_score(
    theta,
    stats,
    s_obs,
    transform,
    q=0.025,
    param_transform=None,
    max_drop=DEFAULT_MAX_DROP,
):
    """Mean squared residual of the uniform-kernel local-linear fit.

    Statistics (table and ``s_obs``) are transformed, ``D`` is recomputed on
    the transformed table, and the fraction ``q`` nearest simulations are
    accepted.  Raises :class:`TransformNotApplicable` for candidates outside
    their domain.
    """
    transform = StatTransform.parse(transform)
    th, S, so, _ = _prepare(theta, stats, s_obs, transform, param_transform, max_drop)
    acc = accept(S, so, q=q, kernel="uniform", theta=th)
    X = design_matrix(acc.delta, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = weighted_least_squares(X, acc.theta, acc.weights)
    return fit.wssr / fit.weight_sum


@dataclass
class CandidateScore:
    transform: StatTransform
    score: float = None
    reason: str = None

    @property
    def applicable(self):
        return self.score is not None


def _best(candidates):
    ok = [(c.score, c.transform.complexity, i) for i, c in enumerate(candidates) if c.applicable]
    if not ok:
        raise TransformNotApplicable("no applicable transformation")
    return candidates[min(ok)[2]]


def _evaluate(theta, stats, s_obs, transform, q, param_transform, max_drop):
    try:
        return CandidateScore(
            transform, wssr_score(theta, stats, s_obs, transform, q, param_transform, max_drop)
        )
    except TransformNotApplicable as exc:
        return CandidateScore(transform, reason=exc.reason)
    except NumericalError as exc:
        return CandidateScore(transform, reason=f"numerical failure: {exc}")


def search_transforms(
    theta,
    stats,
    s_obs,
    q=0.025,
    param_transform=None,
    exhaustive_limit=EXHAUSTIVE_LIMIT,
    max_drop=DEFAULT_MAX_DROP,
):
    """Search over identity/sqrt/log for every summary statistic.

    Exhaustive over the ``3^d`` candidates when ``3^d <= exhaustive_limit``,
    otherwise one greedy pass over the coordinates.

    Returns
    -------
    candidates : list of CandidateScore
        Every evaluated candidate, in evaluation order.
    chosen : StatTransform
    strategy : str
        ``"exhaustive"`` or ``"greedy"``.
    """
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    d = stats.shape[1]
    args = (theta, stats, s_obs)
    if 3**d <= exhaustive_limit:
        candidates = [
            _evaluate(*args, StatTransform(tags), q, param_transform, max_drop)
            for tags in itertools.product(STAT_TAGS, repeat=d)
        ]
        return candidates, _best(candidates).transform, "exhaustive"

    candidates = []
    current = ["identity"] * d
    for k in range(d):
        sweep = []
        for tag in STAT_TAGS:
            tags = list(current)
            tags[k] = tag
            sweep.append(_evaluate(*args, StatTransform(tuple(tags)), q, param_transform, max_drop))
        candidates.extend(sweep)
        try:
            current = list(_best(sweep).transform.tags)
        except TransformNotApplicable:
            pass
    return candidates, StatTransform(tuple(current)), "greedy"


@dataclass
class CVResult:
    degree: int
    score: float
    n_folds: int
    n_skipped: int
    n_rank_deficient: int = 0

    @property
    def unreliable(self):
        return self.n_skipped > 0.1 * self.n_folds


def cv_scores(
    theta,
    stats,
    s_obs,
    transform=None,
    degrees=(0, 1, 2),
    q=0.025,
    kernel="epanechnikov",
    param_transform=None,
    cv_subsample=1000,
    seed=0,
    max_drop=DEFAULT_MAX_DROP,
    folds="all",
):
    """Leave-one-out prediction error of local polynomials of each degree.

    With ``folds="all"`` every simulation is a candidate fold; with
    ``folds="accepted"`` only those accepted around ``s_obs`` are.  At most
    ``cv_subsample`` folds are used, chosen with a seeded generator.  For fold
    ``i`` the local regression is refitted around ``s_i`` with ``s_i``
    itself removed, using the same scale ``D``, kernel and acceptance
    fraction, and used to predict ``theta_i``.  The score is the mean of the
    squared prediction errors.

    Returns a dict ``degree -> CVResult``.
    """
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    transform = StatTransform.parse(transform) if transform is not None else StatTransform.identity(stats.shape[1])
    th, S, so, _ = _prepare(theta, stats, s_obs, transform, param_transform, max_drop)
    n, d = S.shape
    scale = statistic_scale(S)
    sk = SphericalKernel(get_kernel(kernel), d)
    acc = accept(S, so, q=q, kernel=sk.base, scale=scale)
    fold_set = folds
    if fold_set == "accepted":
        folds = acc.indices[acc.weights > 0]
    elif fold_set == "all":
        folds = np.arange(n)
    else:
        raise ConfigError(f"folds must be 'accepted' or 'all', got {fold_set!r}")
    if folds.size > cv_subsample:
        rng = np.random.default_rng(seed)
        folds = np.sort(rng.choice(folds, size=cv_subsample, replace=False))
    if folds.size == 0:
        raise EmptyNeighborhoodError("empty neighborhood: no folds for cross-validation")

    # rank among the n - 1 other rows, shifted by one for the row itself
    rank = max(1, int(np.ceil(q * (n - 1) - 1e-9)))
    sq_err = {j: [] for j in degrees}
    skipped = {j: 0 for j in degrees}
    deficient = {j: 0 for j in degrees}
    radius = sk.base.support
    for i in folds:
        dist = standardized_distances(S, S[i], scale)
        b = float(np.partition(dist, rank)[rank])
        if not b > 0:
            for j in degrees:
                skipped[j] += 1
            continue
        if np.isfinite(radius):
            nb = np.flatnonzero(dist <= b * radius)
        else:
            nb = np.arange(n)
        nb = nb[nb != i]
        bw = BandwidthMatrix(scale, b)
        w = kernel_weight(sk, bw, S[nb] - S[i])
        delta = S[nb] - S[i]
        for j in degrees:
            if np.count_nonzero(w > 0) < n_columns(j, d):
                skipped[j] += 1
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = weighted_least_squares(design_matrix(delta, j), th[nb], w)
            deficient[j] += fit.rank_deficient
            sq_err[j].append((fit.alpha - th[i]) ** 2)
    out = {}
    for j in degrees:
        errs = sq_err[j]
        out[j] = CVResult(
            degree=j,
            score=float(np.mean(errs)) if errs else float("nan"),
            n_folds=int(folds.size),
            n_skipped=skipped[j],
            n_rank_deficient=deficient[j],
        )
    return out


def cv_score(theta, stats, s_obs, transform=None, degree=1, q=0.025, **kwargs):
    """Leave-one-out score for a single degree (see :func:`cv_scores`)."""
    return cv_scores(theta, stats, s_obs, transform, degrees=(degree,), q=q, **kwargs)[degree]


@dataclass
class SelectionReport:
    """Outcome of the transformation search and the choice of degree."""

    stat_names: list
    param_name: str
    param_transform: str
    q: float
    candidates: list = field(default_factory=list)
    chosen_transform: StatTransform = None
    strategy: str = "fixed"
    cv: dict = field(default_factory=dict)
    chosen_degree: int = None
    degree_policy: str = "fixed"

    def to_dict(self):
        return {
            "param": self.param_name,
            "param_transform": self.param_transform,
            "stat_names": list(self.stat_names),
            "q": self.q,
            "strategy": self.strategy,
            "wssr": [
                {
                    "transform": str(c.transform),
                    "label": c.transform.label(self.stat_names),
                    "wssr": c.score,
                    "skipped": c.reason,
                }
                for c in self.candidates
            ],
            "chosen_transform": str(self.chosen_transform),
            "degree_policy": self.degree_policy,
            "cv": {
                str(j): {
                    "score": r.score,
                    "n_folds": r.n_folds,
                    "n_skipped": r.n_skipped,
                    "n_rank_deficient": r.n_rank_deficient,
                    "unreliable": r.unreliable,
                }
                for j, r in sorted(self.cv.items())
            },
            "chosen_degree": self.chosen_degree,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render(self):
        """Plain-text rendering in the layout of a WSSR / CV table."""
        lines = [f"Parameter: {self.param_name} ({self.param_transform})"]
        if self.candidates:
            lines.append("Sum of squared residuals")
            width = max(len(c.transform.label(self.stat_names)) for c in self.candidates)
            for c in self.candidates:
                mark = "*" if c.transform == self.chosen_transform else " "
                val = f"{c.score:.4f}" if c.applicable else f"skipped ({c.reason})"
                lines.append(f" {mark} {c.transform.label(self.stat_names):<{width}}  {val}")
        if self.cv:
            lines.append("Cross validation")
            names = {0: "no adjustment", 1: "linear", 2: "quadratic"}
            for j, r in sorted(self.cv.items()):
                mark = "*" if j == self.chosen_degree else " "
                flag = "  (unreliable)" if r.unreliable else ""
                lines.append(f" {mark} {names[j]:<14} {r.score:.4f}{flag}")
        return "\n".join(lines)


def choose_degree(cv):
    """Argmin of the CV scores; ties go to the lower degree."""
    ok = [(r.score, j) for j, r in cv.items() if np.isfinite(r.score)]
    if not ok:
        raise UnderdeterminedRegressionError("no degree could be cross-validated")
    return min(ok)[1]


def select(
    theta,
    stats,
    s_obs,
    q=0.025,
    param_transform=None,
    transform="auto",
    degree="auto",
    kernel="epanechnikov",
    stat_names=None,
    param_name="theta",
    cv_subsample=1000,
    seed=0,
    max_drop=DEFAULT_MAX_DROP,
    exhaustive_limit=EXHAUSTIVE_LIMIT,
    folds="all",
):
    """Run the transformation search and/or the CV choice of degree."""
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    d = stats.shape[1]
    param_transform = param_transform or ParamTransform()
    report = SelectionReport(
        stat_names=list(stat_names or [f"s{k + 1}" for k in range(d)]),
        param_name=param_name,
        param_transform=str(param_transform),
        q=q,
    )
    if isinstance(transform, str) and transform == "auto":
        cands, chosen, strategy = search_transforms(
            theta, stats, s_obs, q, param_transform, exhaustive_limit, max_drop
        )
        report.candidates, report.chosen_transform, report.strategy = cands, chosen, strategy
    else:
        report.chosen_transform = StatTransform.parse(transform)
    if isinstance(degree, str) and degree == "auto":
        report.degree_policy = "cv"
        report.cv = cv_scores(
            theta,
            stats,
            s_obs,
            report.chosen_transform,
            (0, 1, 2),
            q,
            kernel,
            param_transform,
            cv_subsample,
            seed,
            max_drop,
            folds,
        )
        report.chosen_degree = choose_degree(report.cv)
    else:
        report.chosen_degree = int(degree)
    return report
