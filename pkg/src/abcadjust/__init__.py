"""Approximate Bayesian computation with local regression adjustment."""

from .estimators import (
    PosteriorEstimate,
    estimate_density,
    posterior_mode,
    silverman_bandwidth,
    weighted_quantiles,
)
from .kernels import (
    BandwidthMatrix,
    SphericalKernel,
    UnivariateKernel,
    bandwidth_from_quantile,
    get_kernel,
    kernel_weight,
    moment_functionals,
)
from .pipeline import AbcResult, abc_posterior, analyze
from .reference import AcceptedSet, ReferenceTable, accept
from .regression import (
    AdjustedSample,
    DesignMatrix,
    RegressionFit,
    adjust,
    build_design,
    design_matrix,
    weighted_least_squares,
)
from .selection import SelectionReport, cv_score, cv_scores, search_transforms, select, wssr_score
from .transforms import ParamTransform, StatTransform

__version__ = "0.1.0"
