"""Leading-order bias and variance of the smooth-rejection estimators.

For a model whose densities are known in closed form the asymptotic bias
of ``g_j`` at ``(theta, s_obs)`` is ``C1 b'^2 + C2_j b^2`` and its variance
``C3 / (n b^d b')`` when ``B = b D``.  :func:`constants` evaluates these
quantities and :func:`empirical_bias_variance` measures them by Monte Carlo.

Conditional densities are parameterised through the residual density
``h(eps | s)`` and the conditional mean ``m(s)``, with
``g(theta | s) = h(theta - m(s) | s)``.  Any conditional density can be
written this way, and the derivatives of ``g`` follow from those of ``h``
and ``m`` by the chain rule.
"""

from dataclasses import dataclass, field
import csv
import io
import math
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, EmptyNeighborhoodError, ModelSupportError
from .estimators import kde
from .kernels import BandwidthMatrix, SphericalKernel, get_kernel, kernel_weight
from .regression import design_matrix, n_columns, weighted_least_squares

__all__ = [
    "AnalyticModel",
    "TheoryConstants",
    "constants",
    "effective_local_size",
    "check_derivatives",
    "BiasVariance",
    "empirical_bias_variance",
    "sweep",
    "sweep_to_csv",
    "rate_check",
    "linear_gaussian",
    "quadratic_gaussian",
    "heteroscedastic_gaussian",
    "ANALYTIC_MODELS",
    "get_analytic_model",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


@dataclass
class AnalyticModel:
    """Joint law of ``(theta, s)`` with closed-form derivatives.

    All callables take ``s`` as a length-``dim`` vector.  ``p_s`` and
    ``m_s`` return gradients, ``p_ss`` and ``m_ss`` Hessians.  The residual
    density ``h(eps, s)`` comes with ``h_eps``, ``h_epseps``, the gradient
    ``h_s``, the Hessian ``h_ss`` and the mixed derivative ``h_eps_s``
    (gradient in ``s`` of ``h_eps``).  ``simulate(rng, n)`` returns
    ``theta`` of shape ``(n,)`` and ``s`` of shape ``(n, dim)``.
    """

    name: str
    dim: int
    p: Callable
    p_s: Callable
    p_ss: Callable
    m: Callable
    m_s: Callable
    m_ss: Callable
    h: Callable
    h_eps: Callable
    h_epseps: Callable
    h_s: Callable
    h_ss: Callable
    h_eps_s: Callable
    simulate: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def _vec(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if s.shape != (self.dim,):
            raise ConfigError(f"expected s of length {self.dim}, got shape {s.shape}")
        return s

    def residual(self, theta, s):
        return float(theta) - float(self.m(self._vec(s)))

    def g(self, theta, s):
        s = self._vec(s)
        return float(self.h(self.residual(theta, s), s))

    def g_thetatheta(self, theta, s):
        s = self._vec(s)
        return float(self.h_epseps(self.residual(theta, s), s))

    def g_s(self, theta, s):
        s = self._vec(s)
        e = self.residual(theta, s)
        return np.asarray(self.h_s(e, s), float) - self.h_eps(e, s) * np.asarray(self.m_s(s), float)

    def g_ss(self, theta, s):
        s = self._vec(s)
        e = self.residual(theta, s)
        ms = np.asarray(self.m_s(s), float)
        hes = np.asarray(self.h_eps_s(e, s), float)
        return (
            np.asarray(self.h_ss(e, s), float)
            - np.outer(hes, ms)
            - np.outer(ms, hes)
            + self.h_epseps(e, s) * np.outer(ms, ms)
            - self.h_eps(e, s) * np.asarray(self.m_ss(s), float)
        )


def _fd_grad(f, x, step):
    x = np.asarray(x, float)
    out = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        out[k] = (f(x + e) - f(x - e)) / (2 * step)
    return out


def _fd_hess(f, x, step):
    x = np.asarray(x, float)
    d = x.size
    out = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            out[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * step * step)
    return out


def check_derivatives(model, points, step=1e-4):
    """Largest relative discrepancy between supplied and finite-difference derivatives.

    ``points`` is an iterable of ``(eps, s)`` pairs.  Returns a dict mapping
    each derivative name to the worst ``|analytic - fd| / max(1, |fd|)``.
    """
    worst = {}

    def record(name, analytic, numeric):
        analytic = np.atleast_1d(np.asarray(analytic, float))
        numeric = np.atleast_1d(np.asarray(numeric, float))
        err = np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric)))
        worst[name] = max(worst.get(name, 0.0), float(err))

    for eps, s in points:
        s = model._vec(s)
        eps = float(eps)
        record("p_s", model.p_s(s), _fd_grad(model.p, s, step))
        record("p_ss", model.p_ss(s), _fd_hess(model.p, s, step))
        record("m_s", model.m_s(s), _fd_grad(model.m, s, step))
        record("m_ss", model.m_ss(s), _fd_hess(model.m, s, step))
        record("h_eps", model.h_eps(eps, s), (model.h(eps + step, s) - model.h(eps - step, s)) / (2 * step))
        record(
            "h_epseps",
            model.h_epseps(eps, s),
            (model.h(eps + step, s) - 2 * model.h(eps, s) + model.h(eps - step, s)) / step**2,
        )
        record("h_s", model.h_s(eps, s), _fd_grad(lambda x: model.h(eps, x), s, step))
        record("h_ss", model.h_ss(eps, s), _fd_hess(lambda x: model.h(eps, x), s, step))
        record("h_eps_s", model.h_eps_s(eps, s), _fd_grad(lambda x: model.h_eps(eps, x), s, step))
        theta = eps + float(model.m(s))
        record("g_s", model.g_s(theta, s), _fd_grad(lambda x: model.g(theta, x), s, step))
        record("g_ss", model.g_ss(theta, s), _fd_hess(lambda x: model.g(theta, x), s, step))
        record(
            "g_thetatheta",
            model.g_thetatheta(theta, s),
            (model.g(theta + step, s) - 2 * model.g(theta, s) + model.g(theta - step, s)) / step**2,
        )
    return worst


@dataclass(frozen=True)
class TheoryConstants:
    """Leading-order constants at one ``(theta, s_obs)``.

    ``C2`` holds ``(C2_0, C2_1, C2_2)``; ``D2`` holds the general-``B``
    analogues when a bandwidth matrix was supplied.
    """

    C1: float
    C2: tuple
    C3: float
    dim: int
    mu2_K: float
    mu2_Kt: float
    R_K: float
    R_Kt: float
    D2: Optional[tuple] = None
    variance_general: Optional[float] = None

    @property
    def C2_0(self):
        return self.C2[0]

    @property
    def C2_1(self):
        return self.C2[1]

    @property
    def C2_2(self):
        return self.C2[2]

    def bias(self, degree, b, b_prime):
        return self.C1 * b_prime**2 + self.C2[degree] * b**2

    def variance(self, n, b, b_prime):
        return self.C3 / (n * b**self.dim * b_prime)

    def mse(self, degree, n, b, b_prime):
        return self.bias(degree, b, b_prime) ** 2 + self.variance(n, b, b_prime)

    def to_dict(self):
        out = {
            "C1": self.C1,
            "C2_0": self.C2[0],
            "C2_1": self.C2[1],
            "C2_2": self.C2[2],
            "C3": self.C3,
            "mu2_K": self.mu2_K,
            "mu2_Ktilde": self.mu2_Kt,
            "R_K": self.R_K,
            "R_Ktilde": self.R_Kt,
        }
        if self.D2 is not None:
            out.update({f"D2_{j}": v for j, v in enumerate(self.D2)})
            out["variance_general"] = self.variance_general
        return out


def _bias_terms(model, theta, s_obs, M):
    """The three bracketed bias expressions with ``D^2`` replaced by ``M``."""
    p = float(model.p(s_obs))
    p_s = np.asarray(model.p_s(s_obs), float)
    eps = model.residual(theta, s_obs)
    g_s = model.g_s(theta, s_obs)
    g_ss = model.g_ss(theta, s_obs)
    h_s = np.asarray(model.h_s(eps, s_obs), float)
    h_ss = np.asarray(model.h_ss(eps, s_obs), float)
    h_e = float(model.h_eps(eps, s_obs))
    m_ss = np.asarray(model.m_ss(s_obs), float)
    t0 = g_s @ M @ p_s / p + np.trace(M @ g_ss) / 2
    t2 = h_s @ M @ p_s / p + np.trace(M @ h_ss) / 2
    t1 = t2 - h_e * np.trace(M @ m_ss) / 2
    return t0, t1, t2


def constants(model, s_obs, theta, D=None, kernel="epanechnikov", ktilde="epanechnikov", B=None):
    """Evaluate ``C1``, ``C2_j``, ``C3`` (and ``D2_j`` when ``B`` is given).

    Parameters
    ----------
    model : AnalyticModel
    s_obs : array_like
        Observed statistics, length ``model.dim``.
    theta : float
        Point at which the posterior density is evaluated.
    D : array_like, optional
        Diagonal of the scale matrix; defaults to ones.
    kernel, ktilde : str
        Base family of the spherical kernel ``K`` and the univariate ``K~``.
    B : array_like, optional
        Full non-singular ``d x d`` bandwidth matrix for the general result.
    """
    s_obs = model._vec(s_obs)
    d = model.dim
    D = np.ones(d) if D is None else np.atleast_1d(np.asarray(D, float))
    if D.shape != (d,) or np.any(D <= 0):
        raise ConfigError("D must hold d positive scales")
    p = float(model.p(s_obs))
    if not p > 0:
        raise ModelSupportError("observed point outside model support")
    K = SphericalKernel(get_kernel(kernel), d)
    Kt = get_kernel(ktilde)
    g = model.g(theta, s_obs)
    C1 = Kt.mu2 * model.g_thetatheta(theta, s_obs) / 2
    C2 = tuple(float(K.mu2 * t) for t in _bias_terms(model, theta, s_obs, np.diag(D**2)))
    C3 = K.roughness * Kt.roughness * g / (float(np.prod(D)) * p)
    D2 = var_general = None
    if B is not None:
        B = np.asarray(B, float).reshape(d, d)
        detB = abs(float(np.linalg.det(B)))
        if not detB > 0:
            raise ConfigError("B must be non-singular")
        D2 = tuple(float(K.mu2 * t) for t in _bias_terms(model, theta, s_obs, B @ B.T))
        # multiply by 1 / (n b') for the variance
        var_general = K.roughness * Kt.roughness * g / (p * detB)
    return TheoryConstants(
        C1=float(C1),
        C2=C2,
        C3=float(C3),
        dim=d,
        mu2_K=K.mu2,
        mu2_Kt=Kt.mu2,
        R_K=K.roughness,
        R_Kt=Kt.roughness,
        D2=D2,
        variance_general=var_general,
    )


def effective_local_size(n, D, b, p_at_sobs):
    """``n |D| p(s_obs) b^d``, the expected kernel mass near ``s_obs``.

    With a uniform spherical kernel the number of simulations inside the
    ellipsoid of radii ``b D`` is close to ``V_d`` times this value, where
    ``V_d`` is the volume of the unit ball.
    """
    D = np.atleast_1d(np.asarray(D, float))
    if n <= 0 or np.any(D <= 0) or b < 0 or p_at_sobs <= 0:
        raise ConfigError("n, D and p(s_obs) must be positive and b non-negative")
    return float(n * np.prod(D) * p_at_sobs * b ** D.size)


# ---------------------------------------------------------------------------
# Monte Carlo harness


@dataclass
class BiasVariance:
    n: int
    b: float
    b_prime: float
    degree: int
    theta: float
    truth: float
    estimates: np.ndarray
    n_dropped: int = 0

    @property
    def replicates(self):
        return int(self.estimates.size)

    @property
    def bias(self):
        return float(np.mean(self.estimates) - self.truth)

    @property
    def variance(self):
        return float(np.var(self.estimates, ddof=1))

    @property
    def mse(self):
        return float(np.mean(np.square(self.estimates - self.truth)))

    @property
    def mc_se(self):
        """Monte Carlo standard error of :attr:`bias`."""
        return math.sqrt(self.variance / self.replicates)

    @property
    def variance_se(self):
        """Approximate standard error of :attr:`variance` (normal theory)."""
        return self.variance * math.sqrt(2.0 / (self.replicates - 1))

    @property
    def mse_se(self):
        return float(np.std(np.square(self.estimates - self.truth), ddof=1) / math.sqrt(self.replicates))


def _one_estimate(model, rng, n, s_obs, theta, bw, K, Kt, degree, b_prime):
    th, s = model.simulate(rng, n)
    s = np.asarray(s, float).reshape(n, model.dim)
    delta = s - s_obs
    w = kernel_weight(K, bw, delta)
    keep = w > 0
    if np.count_nonzero(keep) < n_columns(degree, model.dim) + 1:
        raise EmptyNeighborhoodError("too few simulations near s_obs")
    delta, w, th = delta[keep], w[keep], np.asarray(th, float)[keep]
    values = th
    if degree > 0:
        X = design_matrix(delta, degree)
        fit = weighted_least_squares(X, th, w)
        values = fit.alpha + th - X.matrix @ fit.coef
    return float(kde(values, w, np.array([theta]), Kt, b_prime)[0])


def empirical_bias_variance(
    model,
    degree,
    n,
    b,
    b_prime,
    replicates,
    seed,
    s_obs,
    theta,
    D=None,
    kernel="epanechnikov",
    ktilde="epanechnikov",
):
    """Monte Carlo bias and variance of ``g_degree(theta | s_obs)``.

    The bandwidth matrix is held fixed at ``B = b D`` (it does not depend
    on the simulations).  Replicate ``r`` draws from
    ``SeedSequence(seed, spawn_key=(r,))``.  Replicates with too few
    simulations in the kernel window are dropped and counted.
    """
    if model.simulate is None:
        raise ConfigError(f"model {model.name!r} has no simulator")
    if degree not in (0, 1, 2):
        raise ConfigError("degree must be 0, 1 or 2")
    s_obs = model._vec(s_obs)
    D = np.ones(model.dim) if D is None else np.atleast_1d(np.asarray(D, float))
    bw = BandwidthMatrix(D, b)
    K = SphericalKernel(get_kernel(kernel), model.dim)
    Kt = get_kernel(ktilde)
    est = []
    dropped = 0
    for r in range(int(replicates)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        try:
            est.append(_one_estimate(model, rng, int(n), s_obs, theta, bw, K, Kt, degree, b_prime))
        except EmptyNeighborhoodError:
            dropped += 1
    return BiasVariance(
        n=int(n),
        b=float(b),
        b_prime=float(b_prime),
        degree=int(degree),
        theta=float(theta),
        truth=model.g(theta, s_obs),
        estimates=np.asarray(est),
        n_dropped=dropped,
    )


SWEEP_COLUMNS = (
    "n", "b", "b_prime", "estimator", "bias", "variance", "mc_se", "mse", "replicates", "dropped"
)


def sweep(model, cells, replicates, seed, s_obs, theta, **kwargs):
    """Run :func:`empirical_bias_variance` over ``(n, b, b_prime, degree)`` cells."""
    return [
        empirical_bias_variance(model, j, n, b, bp, replicates, seed, s_obs, theta, **kwargs)
        for n, b, bp, j in cells
    ]


def sweep_to_csv(results):
    """CSV text with one row per harness cell."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in results:
        writer.writerow(
            [r.n, repr(r.b), repr(r.b_prime), r.degree, repr(r.bias), repr(r.variance),
             repr(r.mc_se), repr(r.mse), r.replicates, r.n_dropped]
        )
    return buf.getvalue()


def rate_check(model, degree, ns, c, replicates, seed, s_obs, theta, **kwargs):
    """Fit ``log MSE`` against ``log n`` along ``b = b' = c n^(-1/(d+5))``.

    Returns ``(slope, results)``; the optimal-rate prediction for the slope
    is ``-4 / (d + 5)``.
    """
    d = model.dim
    results = []
    for k, n in enumerate(ns):
        h = c * n ** (-1.0 / (d + 5))
        results.append(
            empirical_bias_variance(model, degree, n, h, h, replicates, seed + k, s_obs, theta, **kwargs)
        )
    slope = np.polyfit(np.log(ns), np.log([r.mse for r in results]), 1)[0]
    return float(slope), results


# ---------------------------------------------------------------------------
# Toy models, all with standard normal statistics


def _std_normal_marginal(d):
    def p(s):
        return float(np.prod(_phi(s)))

    def p_s(s):
        return -np.asarray(s) * p(s)

    def p_ss(s):
        s = np.asarray(s)
        return (np.outer(s, s) - np.eye(d)) * p(s)

    return p, p_s, p_ss


def _homoscedastic_h(sigma, d):
    def h(e, s):
        return float(_phi(e / sigma) / sigma)

    def h_eps(e, s):
        return -e / sigma**2 * h(e, s)

    def h_epseps(e, s):
        return (e * e / sigma**2 - 1) / sigma**2 * h(e, s)

    zero_v = lambda e, s: np.zeros(d)  # noqa: E731
    zero_m = lambda e, s: np.zeros((d, d))  # noqa: E731
    return h, h_eps, h_epseps, zero_v, zero_m, zero_v


def linear_gaussian(coef=(1.0,), intercept=0.0, sigma=1.0):
    """``s ~ N(0, I_d)``, ``theta | s ~ N(intercept + coef . s, sigma^2)``."""
    coef = np.atleast_1d(np.asarray(coef, float))
    d = coef.size
    p, p_s, p_ss = _std_normal_marginal(d)
    h, h_eps, h_epseps, h_s, h_ss, h_eps_s = _homoscedastic_h(sigma, d)

    def simulate(rng, n):
        s = rng.standard_normal((n, d))
        return intercept + s @ coef + sigma * rng.standard_normal(n), s

    return AnalyticModel(
        name="linear",
        dim=d,
        p=p, p_s=p_s, p_ss=p_ss,
        m=lambda s: float(intercept + np.dot(coef, s)),
        m_s=lambda s: coef.copy(),
        m_ss=lambda s: np.zeros((d, d)),
        h=h, h_eps=h_eps, h_epseps=h_epseps, h_s=h_s, h_ss=h_ss, h_eps_s=h_eps_s,
        simulate=simulate,
        params={"coef": coef.tolist(), "intercept": intercept, "sigma": sigma},
    )


def quadratic_gaussian(kappa=0.5, sigma=1.0):
    """``s ~ N(0, 1)``, ``theta | s ~ N(s + kappa s^2, sigma^2)``."""
    p, p_s, p_ss = _std_normal_marginal(1)
    h, h_eps, h_epseps, h_s, h_ss, h_eps_s = _homoscedastic_h(sigma, 1)

    def simulate(rng, n):
        s = rng.standard_normal((n, 1))
        x = s[:, 0]
        return x + kappa * x * x + sigma * rng.standard_normal(n), s

    return AnalyticModel(
        name="quadratic",
        dim=1,
        p=p, p_s=p_s, p_ss=p_ss,
        m=lambda s: float(s[0] + kappa * s[0] ** 2),
        m_s=lambda s: np.array([1.0 + 2.0 * kappa * s[0]]),
        m_ss=lambda s: np.array([[2.0 * kappa]]),
        h=h, h_eps=h_eps, h_epseps=h_epseps, h_s=h_s, h_ss=h_ss, h_eps_s=h_eps_s,
        simulate=simulate,
        params={"kappa": kappa, "sigma": sigma},
    )


def heteroscedastic_gaussian(lam=0.3):
    """``s ~ N(0, 1)``, ``theta | s ~ N(s, exp(2 lam s))``."""
    p, p_s, p_ss = _std_normal_marginal(1)

    def _sz(e, s):
        sig = math.exp(lam * s[0])
        return sig, e / sig

    def h(e, s):
        sig, z = _sz(e, s)
        return float(_phi(z) / sig)

    def h_eps(e, s):
        sig, z = _sz(e, s)
        return float(-z * _phi(z) / sig**2)

    def h_epseps(e, s):
        sig, z = _sz(e, s)
        return float((z * z - 1) * _phi(z) / sig**3)

    def h_s(e, s):
        sig, z = _sz(e, s)
        return np.array([lam * (z * z - 1) * _phi(z) / sig])

    def h_ss(e, s):
        sig, z = _sz(e, s)
        return np.array([[lam**2 * (z**4 - 4 * z * z + 1) * _phi(z) / sig]])

    def h_eps_s(e, s):
        sig, z = _sz(e, s)
        return np.array([lam * z * (3 - z * z) * _phi(z) / sig**2])

    def simulate(rng, n):
        s = rng.standard_normal((n, 1))
        x = s[:, 0]
        return x + np.exp(lam * x) * rng.standard_normal(n), s

    return AnalyticModel(
        name="heteroscedastic",
        dim=1,
        p=p, p_s=p_s, p_ss=p_ss,
        m=lambda s: float(s[0]),
        m_s=lambda s: np.ones(1),
        m_ss=lambda s: np.zeros((1, 1)),
        h=h, h_eps=h_eps, h_epseps=h_epseps, h_s=h_s, h_ss=h_ss, h_eps_s=h_eps_s,
        simulate=simulate,
        params={"lam": lam},
    )


ANALYTIC_MODELS = {
    "toy": linear_gaussian,
    "linear": linear_gaussian,
    "quadratic": quadratic_gaussian,
    "heteroscedastic": heteroscedastic_gaussian,
}


def get_analytic_model(name, **options):
    try:
        factory = ANALYTIC_MODELS[name]
    except KeyError:
        raise ConfigError(
            f"unknown analytic model {name!r}; choose from {sorted(ANALYTIC_MODELS)}"
        ) from None
    return factory(**options)
