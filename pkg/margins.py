"""
Margins Module

Univariate marginal distributions for binary, count and continuous responses.
Each family exposes its density (mass), CDF, generalized-inverse quantile,
moments and an intercept-only offset. Parameterizations follow the GAMLSS
conventions; the exact density of every family is written next to its kernel.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special, stats

from copula_config import COUNT_QUANTILE_CAP, LOGSER_TAIL_TOL, OFFSET_CLAMP
from copula_errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Link:
    """Link g and response h = g^-1 with the analytic derivative dh/deta."""
    name: str
    link: Callable[[np.ndarray], np.ndarray]
    response: Callable[[np.ndarray], np.ndarray]
    dresponse: Callable[[np.ndarray], np.ndarray]


def _cloglog_response(eta):
    return -np.expm1(-np.exp(eta))


def _cloglog_link(p):
    return np.log(-np.log1p(-p))


def _cloglog_dresponse(eta):
    return np.exp(eta - np.exp(eta))


LINKS: Dict[str, Link] = {
    "identity": Link("identity", lambda t: t, lambda e: e, lambda e: np.ones_like(e)),
    "log": Link("log", np.log, np.exp, np.exp),
    "logit": Link("logit", special.logit, special.expit,
                  lambda e: special.expit(e) * special.expit(-e)),
    "probit": Link("probit", special.ndtri, special.ndtr,
                   lambda e: np.exp(-0.5 * e * e) / np.sqrt(2.0 * np.pi)),
    "cloglog": Link("cloglog", _cloglog_link, _cloglog_response, _cloglog_dresponse),
    # copula links
    "atanh": Link("atanh", np.arctanh, np.tanh, lambda e: 1.0 - np.tanh(e) ** 2),
    "log_minus_one": Link("log_minus_one", lambda t: np.log(t - 1.0),
                          lambda e: 1.0 + np.exp(e), np.exp),
    "log_negative": Link("log_negative", lambda t: np.log(-t),
                         lambda e: -np.exp(e), lambda e: -np.exp(e)),
    "log_negative_minus_one": Link("log_negative_minus_one", lambda t: np.log(-t - 1.0),
                                   lambda e: -1.0 - np.exp(e), lambda e: -np.exp(e)),
}


def get_link(link_id: str) -> Link:
    """Look up a link by id; unknown ids are configuration errors."""
    try:
        return LINKS[link_id]
    except KeyError:
        raise ConfigurationError(f"Unknown link id: {link_id}")


def response_apply(link_id: str, eta):
    """Map a predictor value onto the parameter scale, h(eta)."""
    link = get_link(link_id)
    with np.errstate(over="ignore"):
        return link.response(np.asarray(eta, dtype=float))


# ---------------------------------------------------------------------------
# Family kernels
# ---------------------------------------------------------------------------

class _Kernel:
    """Distribution kernel working on broadcast parameter arrays."""

    param_names: Tuple[str, ...] = ()
    default_links: Tuple[str, ...] = ()
    admissible_links: Tuple[Tuple[str, ...], ...] = ()
    support = "nonneg-integer"

    def check(self, params: Sequence[np.ndarray]) -> None:
        raise NotImplementedError

    def logpdf(self, y, params):
        raise NotImplementedError

    def cdf(self, y, params):
        raise NotImplementedError

    def mean(self, params):
        raise NotImplementedError

    def variance(self, params):
        raise NotImplementedError

    def quantile(self, p, params):
        return _discrete_quantile(lambda yy: self.cdf(yy, params), p)

    def initial_params(self, y: np.ndarray) -> List[float]:
        raise NotImplementedError


def _require(condition, message: str) -> None:
    bad = ~np.asarray(condition, dtype=bool)
    if np.any(bad):
        index = int(np.flatnonzero(bad.ravel())[0])
        raise DomainError(message, index=index)


def _discrete_quantile(cdf_fn: Callable[[np.ndarray], np.ndarray], p: np.ndarray) -> np.ndarray:
    """Smallest integer y with F(y) >= p, by exponential stepping and integer bisection."""
    p = np.asarray(p, dtype=float)
    lo = np.full(p.shape, -1.0)
    hi = np.zeros(p.shape)
    need = cdf_fn(hi) < p
    while np.any(need):
        hi = np.where(need, 2.0 * hi + 1.0, hi)
        if np.any(hi > COUNT_QUANTILE_CAP):
            raise DomainError(f"Count quantile exceeds cap {COUNT_QUANTILE_CAP}")
        lo = np.where(need, np.floor(hi / 2.0), lo)
        need = cdf_fn(hi) < p
    while np.any(hi - lo > 1):
        mid = np.floor((lo + hi) / 2.0)
        ok = cdf_fn(mid) >= p
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


class _Bernoulli(_Kernel):
    # f(y) = mu^y (1 - mu)^(1 - y), y in {0, 1}
    param_names = ("mu",)
    default_links = ("logit",)
    admissible_links = (("logit", "probit", "cloglog"),)
    support = "binary"

    def check(self, params):
        (mu,) = params
        _require((mu >= 0) & (mu <= 1), "Bernoulli probability outside [0, 1]")

    def logpdf(self, y, params):
        (mu,) = params
        with np.errstate(divide="ignore"):
            return np.where(y == 1, np.log(mu), np.log1p(-mu))

    def cdf(self, y, params):
        (mu,) = params
        return np.where(y < 0, 0.0, np.where(y < 1, 1.0 - mu, 1.0))

    def quantile(self, p, params):
        (mu,) = params
        return np.where(p <= 1.0 - mu, 0.0, 1.0)

    def mean(self, params):
        return params[0]

    def variance(self, params):
        return params[0] * (1.0 - params[0])


class _Gaussian(_Kernel):
    # f(y) = exp(-(y - mu)^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)
    param_names = ("mu", "sigma")
    default_links = ("identity", "log")
    admissible_links = (("identity",), ("log",))
    support = "real"

    def check(self, params):
        mu, sigma = params
        _require(np.isfinite(mu), "Gaussian mean not finite")
        _require(sigma > 0, "Gaussian scale must be positive")

    def logpdf(self, y, params):
        mu, sigma = params
        return stats.norm.logpdf(y, loc=mu, scale=sigma)

    def cdf(self, y, params):
        mu, sigma = params
        return stats.norm.cdf(y, loc=mu, scale=sigma)

    def quantile(self, p, params):
        mu, sigma = params
        return mu + sigma * special.ndtri(p)

    def mean(self, params):
        return params[0]

    def variance(self, params):
        return params[1] ** 2


class _Poisson(_Kernel):
    # f(y) = exp(-mu) mu^y / y!
    param_names = ("mu",)
    default_links = ("log",)
    admissible_links = (("log",),)

    def check(self, params):
        _require(params[0] > 0, "Poisson mean must be positive")

    def logpdf(self, y, params):
        return stats.poisson.logpmf(y, params[0])

    def cdf(self, y, params):
        return np.where(y < 0, 0.0, stats.poisson.cdf(np.floor(y), params[0]))

    def mean(self, params):
        return params[0]

    def variance(self, params):
        return params[0]

    def initial_params(self, y):
        return [max(float(np.mean(y)), OFFSET_CLAMP)]


class _Geometric(_Kernel):
    # f(y) = mu^y / (1 + mu)^(y + 1)
    param_names = ("mu",)
    default_links = ("log",)
    admissible_links = (("log",),)

    def check(self, params):
        _require(params[0] > 0, "Geometric mean must be positive")

    def logpdf(self, y, params):
        (mu,) = params
        return y * np.log(mu) - (y + 1.0) * np.log1p(mu)

    def cdf(self, y, params):
        (mu,) = params
        yy = np.floor(y)
        with np.errstate(invalid="ignore"):
            value = -np.expm1((yy + 1.0) * (np.log(mu) - np.log1p(mu)))
        return np.where(y < 0, 0.0, value)

    def mean(self, params):
        return params[0]

    def variance(self, params):
        return params[0] + params[0] ** 2

    def initial_params(self, y):
        return [max(float(np.mean(y)), OFFSET_CLAMP)]


def _nbi_args(mu, sigma):
    return 1.0 / sigma, 1.0 / (1.0 + sigma * mu)


class _NegBin1(_Kernel):
    # f(y) = Gamma(y + 1/sigma) / (Gamma(1/sigma) y!) *
    #        (sigma mu / (1 + sigma mu))^y (1 / (1 + sigma mu))^(1/sigma)
    param_names = ("mu", "sigma")
    default_links = ("log", "log")
    admissible_links = (("log",), ("log",))

    def check(self, params):
        mu, sigma = params
        _require(mu > 0, "Negative binomial mean must be positive")
        _require(sigma > 0, "Negative binomial dispersion must be positive")

    def logpdf(self, y, params):
        return stats.nbinom.logpmf(y, *_nbi_args(*params))

    def cdf(self, y, params):
        return np.where(y < 0, 0.0, stats.nbinom.cdf(np.floor(y), *_nbi_args(*params)))

    def mean(self, params):
        return params[0]

    def variance(self, params):
        mu, sigma = params
        return mu + sigma * mu ** 2

    def initial_params(self, y):
        m = max(float(np.mean(y)), OFFSET_CLAMP)
        v = float(np.var(y))
        return [m, max((v - m) / m ** 2, 0.1)]


def _logser_alpha(mu):
    return -1.0 / np.log1p(-mu)


def _logser_cdf(y, mu):
    """CDF of the log-series distribution on {1, 2, ...}, summed until the tail is negligible."""
    y = np.floor(np.asarray(y, dtype=float))
    y, mu = np.broadcast_arrays(y, mu)
    alpha = _logser_alpha(mu)
    acc = np.zeros(y.shape)
    if not y.size:
        return acc
    log_mu = np.log(mu)
    # the mass beyond k is below alpha mu^(k + 1) / (1 - mu)
    needed = np.ceil((np.log(LOGSER_TAIL_TOL) + np.log1p(-mu) - np.log(alpha)) / log_mu)
    top = int(min(np.max(y), np.clip(np.max(needed), 1, COUNT_QUANTILE_CAP)))
    for k in range(1, top + 1):
        active = y >= k
        if not np.any(active):
            break
        acc = acc + np.where(active, alpha * np.exp(k * log_mu) / k, 0.0)
    return np.minimum(acc, 1.0)


class _ZeroAlteredLogarithmic(_Kernel):
    # f(0) = sigma
    # f(y) = (1 - sigma) alpha mu^y / y,  y >= 1,  alpha = -1 / log(1 - mu)
    param_names = ("mu", "sigma")
    default_links = ("logit", "logit")
    admissible_links = (("logit",), ("logit",))

    def check(self, params):
        mu, sigma = params
        _require((mu > 0) & (mu < 1), "ZALG log-series parameter outside (0, 1)")
        _require((sigma >= 0) & (sigma <= 1), "ZALG zero probability outside [0, 1]")

    def logpdf(self, y, params):
        mu, sigma = params
        yy = np.maximum(y, 1.0)
        with np.errstate(divide="ignore"):
            positive = (np.log1p(-sigma) + np.log(_logser_alpha(mu))
                        + yy * np.log(mu) - np.log(yy))
            return np.where(y == 0, np.log(sigma), positive)

    def cdf(self, y, params):
        mu, sigma = params
        return np.where(y < 0, 0.0, sigma + (1.0 - sigma) * _logser_cdf(np.maximum(y, 0.0), mu))

    def mean(self, params):
        mu, sigma = params
        return (1.0 - sigma) * _logser_alpha(mu) * mu / (1.0 - mu)

    def variance(self, params):
        mu, sigma = params
        a = (1.0 - sigma) * _logser_alpha(mu) * mu
        return a * (1.0 - a) / (1.0 - mu) ** 2

    def initial_params(self, y):
        zero = float(np.mean(y == 0))
        return [0.5, min(max(zero, OFFSET_CLAMP), 1.0 - OFFSET_CLAMP)]


class _ZeroInflatedPoisson(_Kernel):
    # f(0) = sigma + (1 - sigma) exp(-mu)
    # f(y) = (1 - sigma) exp(-mu) mu^y / y!,  y >= 1
    param_names = ("mu", "sigma")
    default_links = ("log", "logit")
    admissible_links = (("log",), ("logit",))

    def check(self, params):
        mu, sigma = params
        _require(mu > 0, "ZIP mean must be positive")
        _require((sigma >= 0) & (sigma <= 1), "ZIP inflation probability outside [0, 1]")

    def logpdf(self, y, params):
        mu, sigma = params
        with np.errstate(divide="ignore"):
            zero = np.log(sigma + (1.0 - sigma) * np.exp(-mu))
            return np.where(y == 0, zero, np.log1p(-sigma) + stats.poisson.logpmf(y, mu))

    def cdf(self, y, params):
        mu, sigma = params
        return np.where(y < 0, 0.0, sigma + (1.0 - sigma) * stats.poisson.cdf(np.floor(y), mu))

    def mean(self, params):
        mu, sigma = params
        return (1.0 - sigma) * mu

    def variance(self, params):
        mu, sigma = params
        return mu * (1.0 - sigma) * (1.0 + mu * sigma)

    def initial_params(self, y):
        m = max(float(np.mean(y)), OFFSET_CLAMP)
        excess = float(np.mean(y == 0)) - np.exp(-m)
        sigma = min(max(excess, 0.05), 0.95)
        return [m / (1.0 - sigma), sigma]


class _ZeroAlteredNegBin(_Kernel):
    # f(0) = nu
    # f(y) = (1 - nu) NBI(y; mu, sigma) / (1 - NBI(0; mu, sigma)),  y >= 1
    param_names = ("mu", "sigma", "nu")
    default_links = ("log", "log", "logit")
    admissible_links = (("log",), ("log",), ("logit",))

    def check(self, params):
        mu, sigma, nu = params
        _require(mu > 0, "ZANBI mean must be positive")
        _require(sigma > 0, "ZANBI dispersion must be positive")
        _require((nu >= 0) & (nu <= 1), "ZANBI zero probability outside [0, 1]")

    @staticmethod
    def _log_nb_zero(mu, sigma):
        return -np.log1p(sigma * mu) / sigma

    def logpdf(self, y, params):
        mu, sigma, nu = params
        log_p0 = self._log_nb_zero(mu, sigma)
        with np.errstate(divide="ignore"):
            positive = (np.log1p(-nu) + stats.nbinom.logpmf(y, *_nbi_args(mu, sigma))
                        - np.log(-np.expm1(log_p0)))
            return np.where(y == 0, np.log(nu), positive)

    def cdf(self, y, params):
        mu, sigma, nu = params
        p0 = np.exp(self._log_nb_zero(mu, sigma))
        nb = stats.nbinom.cdf(np.floor(np.maximum(y, 0.0)), *_nbi_args(mu, sigma))
        value = nu + (1.0 - nu) * (nb - p0) / (1.0 - p0)
        return np.where(y < 0, 0.0, np.clip(value, 0.0, 1.0))

    def _c(self, params):
        mu, sigma, nu = params
        return (1.0 - nu) / -np.expm1(self._log_nb_zero(mu, sigma))

    def mean(self, params):
        return self._c(params) * params[0]

    def variance(self, params):
        mu, sigma, _ = params
        c = self._c(params)
        return c * mu + c * mu ** 2 * (1.0 + sigma - c)

    def initial_params(self, y):
        zero = min(max(float(np.mean(y == 0)), OFFSET_CLAMP), 1.0 - OFFSET_CLAMP)
        positive = y[y > 0]
        m = float(np.mean(positive)) if positive.size else 1.0
        return [max(m, OFFSET_CLAMP), 1.0, zero]


class _ZeroInflatedNegBin(_Kernel):
    # f(0) = nu + (1 - nu) NBI(0; mu, sigma)
    # f(y) = (1 - nu) NBI(y; mu, sigma),  y >= 1
    param_names = ("mu", "sigma", "nu")
    default_links = ("log", "log", "logit")
    admissible_links = (("log",), ("log",), ("logit",))

    def check(self, params):
        mu, sigma, nu = params
        _require(mu > 0, "ZINBI mean must be positive")
        _require(sigma > 0, "ZINBI dispersion must be positive")
        _require((nu >= 0) & (nu <= 1), "ZINBI inflation probability outside [0, 1]")

    def logpdf(self, y, params):
        mu, sigma, nu = params
        nb_args = _nbi_args(mu, sigma)
        with np.errstate(divide="ignore"):
            zero = np.log(nu + (1.0 - nu) * stats.nbinom.pmf(0, *nb_args))
            return np.where(y == 0, zero, np.log1p(-nu) + stats.nbinom.logpmf(y, *nb_args))

    def cdf(self, y, params):
        mu, sigma, nu = params
        nb = stats.nbinom.cdf(np.floor(np.maximum(y, 0.0)), *_nbi_args(mu, sigma))
        return np.where(y < 0, 0.0, nu + (1.0 - nu) * nb)

    def mean(self, params):
        mu, _, nu = params
        return (1.0 - nu) * mu

    def variance(self, params):
        mu, sigma, nu = params
        return mu * (1.0 - nu) + mu ** 2 * (1.0 - nu) * (sigma + nu)

    def initial_params(self, y):
        m = max(float(np.mean(y)), OFFSET_CLAMP)
        return [m / 0.9, 1.0, 0.1]


_KERNELS: Dict[str, _Kernel] = {
    "bernoulli": _Bernoulli(),
    "gaussian": _Gaussian(),
    "poisson": _Poisson(),
    "geometric": _Geometric(),
    "negbin1": _NegBin1(),
    "zalg": _ZeroAlteredLogarithmic(),
    "zip": _ZeroInflatedPoisson(),
    "zanbi": _ZeroAlteredNegBin(),
    "zinbi": _ZeroInflatedNegBin(),
}


@dataclass(frozen=True)
class MarginFamily:
    """A univariate family together with the link chosen for each parameter."""
    family_id: str
    links: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.family_id not in _KERNELS:
            raise ConfigurationError(f"Unknown margin family: {self.family_id}")
        kernel = _KERNELS[self.family_id]
        links = tuple(self.links) if self.links else kernel.default_links
        if len(links) != len(kernel.param_names):
            raise ConfigurationError(
                f"{self.family_id} needs {len(kernel.param_names)} links, got {len(links)}")
        for link_id, allowed in zip(links, kernel.admissible_links):
            get_link(link_id)
            if link_id not in allowed:
                raise ConfigurationError(
                    f"Link {link_id} not admissible for {self.family_id}; use one of {allowed}")
        object.__setattr__(self, "links", links)

    @property
    def kernel(self) -> _Kernel:
        return _KERNELS[self.family_id]

    @property
    def n_params(self) -> int:
        return len(self.kernel.param_names)

    @property
    def param_names(self) -> Tuple[str, ...]:
        return self.kernel.param_names

    @property
    def support(self) -> str:
        return self.kernel.support

    def to_dict(self) -> Dict:
        return {"family": self.family_id, "links": list(self.links)}


def make_family(family_id: str, links: Optional[Sequence[str]] = None) -> MarginFamily:
    return MarginFamily(family_id, tuple(links) if links else ())


def _as_params(family: MarginFamily, params) -> List[np.ndarray]:
    params = [np.asarray(p, dtype=float) for p in params]
    if len(params) != family.n_params:
        raise DomainError(
            f"{family.family_id} expects {family.n_params} parameters, got {len(params)}")
    return params


def check_support(family: MarginFamily, y) -> np.ndarray:
    """Validate responses against the family support; returns y as float array."""
    y = np.asarray(y, dtype=float)
    _require(np.isfinite(y), "Response is not finite")
    if family.support == "binary":
        _require((y == 0) | (y == 1), f"Response outside {{0, 1}} for {family.family_id}")
    elif family.support == "nonneg-integer":
        _require((y >= 0) & (y == np.floor(y)),
                 f"Response is not a non-negative integer for {family.family_id}")
    return y


def params_from_eta(family: MarginFamily, eta: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Apply the family's response functions to its block of predictors."""
    return [response_apply(link_id, e) for link_id, e in zip(family.links, eta)]


def margin_logpdf(family: MarginFamily, y, params) -> np.ndarray:
    params = _as_params(family, params)
    family.kernel.check(params)
    y = check_support(family, y)
    return family.kernel.logpdf(y, params)


def margin_pdf(family: MarginFamily, y, params) -> np.ndarray:
    """Density (continuous) or probability mass (discrete) at y."""
    return np.exp(margin_logpdf(family, y, params))


def margin_cdf(family: MarginFamily, y, params) -> np.ndarray:
    params = _as_params(family, params)
    family.kernel.check(params)
    return family.kernel.cdf(np.asarray(y, dtype=float), params)


def margin_quantile(family: MarginFamily, p, params) -> np.ndarray:
    """Generalized inverse: smallest y in the support with F(y) >= p."""
    p = np.asarray(p, dtype=float)
    _require((p > 0) & (p < 1), "Quantile level outside (0, 1)")
    params = _as_params(family, params)
    family.kernel.check(params)
    shape = np.broadcast_shapes(p.shape, *(q.shape for q in params))
    p = np.broadcast_to(p, shape)
    params = [np.broadcast_to(q, shape) for q in params]
    return family.kernel.quantile(p, params)


def margin_mean(family: MarginFamily, params) -> np.ndarray:
    params = _as_params(family, params)
    family.kernel.check(params)
    return family.kernel.mean(params)


def margin_variance(family: MarginFamily, params) -> np.ndarray:
    params = _as_params(family, params)
    family.kernel.check(params)
    return family.kernel.variance(params)


def margin_sample(family: MarginFamily, params, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw by quantile transform of uniforms."""
    u = rng.uniform(size=size)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return margin_quantile(family, u, params)


def _clamp_param(value: float, link_id: str) -> Tuple[float, bool]:
    if link_id in ("logit", "probit", "cloglog"):
        clamped = min(max(value, OFFSET_CLAMP), 1.0 - OFFSET_CLAMP)
    elif link_id == "log":
        clamped = max(value, OFFSET_CLAMP)
    else:
        clamped = value
    return clamped, clamped != value


def margin_offset(family: MarginFamily, y) -> np.ndarray:
    """
    Intercept-only maximum-likelihood estimate on the link scale.

    Args:
        family: margin family with its links
        y: response vector within the family support

    Returns:
        Array of length n_params with the offset predictor per parameter
    """
    y = check_support(family, y)
    if y.size == 0:
        raise DomainError("Cannot compute offsets from an empty response")

    if family.family_id == "bernoulli":
        estimates = [float(np.mean(y))]
    elif family.family_id == "gaussian":
        estimates = [float(np.mean(y)), float(np.std(y))]
    elif family.family_id in ("poisson", "geometric"):
        estimates = [float(np.mean(y))]
    else:
        estimates = _numeric_offset(family, y)

    eta0 = []
    for value, link_id, name in zip(estimates, family.links, family.param_names):
        clamped, changed = _clamp_param(value, link_id)
        if changed:
            logger.warning(f"Degenerate sample for {family.family_id}.{name}: "
                           f"estimate {value:.6g} clamped to {clamped:.6g}")
        eta0.append(float(get_link(link_id).link(np.asarray(clamped))))
    return np.asarray(eta0)


def _numeric_offset(family: MarginFamily, y: np.ndarray) -> List[float]:
    kernel = family.kernel
    links = [get_link(link_id) for link_id in family.links]
    start = []
    for value, link_id in zip(kernel.initial_params(y), family.links):
        clamped, _ = _clamp_param(value, link_id)
        start.append(float(get_link(link_id).link(np.asarray(clamped))))

    def objective(eta):
        params = [link.response(np.asarray(e)) for link, e in zip(links, eta)]
        with np.errstate(all="ignore"):
            value = -np.sum(kernel.logpdf(y, params))
        return value if np.isfinite(value) else 1e300

    result = optimize.minimize(objective, np.asarray(start), method="L-BFGS-B",
                               bounds=[(-30.0, 30.0)] * len(start),
                               options={"ftol": 1e-14, "gtol": 1e-10, "maxiter": 2000})
    if not result.success:
        logger.warning(f"Offset optimization for {family.family_id} did not converge: "
                       f"{result.message}")
    return [float(link.response(np.asarray(e))) for link, e in zip(links, result.x)]
