"""
Likelihood Module

Joint negative log-likelihood of a bivariate response built from two margins
and a copula, and its gradient with respect to every additive predictor.

Three response pairs are supported:
    binary-binary      four-cell mass with P(1, 1) = C(p1, p2)
    count-count        rectangle mass C(F1, F2) - C(F1 - f1, F2)
                       - C(F1, F2 - f2) + C(F1 - f1, F2 - f2)
    binary-continuous  (1 - y1) log h + y1 log(1 - h) + log f2 with
                       h = dC(F1(0), F2(y2)) / dF2
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from copula_config import GRADIENT_PROB_CLAMP, GRADIENT_REL_STEP, MASS_FLOOR
from copula_errors import ConfigurationError, DomainError, NumericError
from copulas import CopulaSpec, copula_cdf, copula_hfun, theta_response
from margins import (MarginFamily, check_support, get_link, margin_cdf,
                     margin_logpdf, params_from_eta)

logger = logging.getLogger(__name__)

PAIR_KINDS = ("binary-binary", "count-count", "binary-continuous")
_PROBABILITY_LINKS = ("logit", "probit", "cloglog")


@dataclass(frozen=True)
class ParamSlot:
    """Position of one distribution parameter in the global predictor layout."""
    name: str
    block: str
    local_index: int
    link: str


@dataclass(frozen=True)
class ModelSpec:
    pair_kind: str
    margin1: MarginFamily
    margin2: MarginFamily
    copula: CopulaSpec
    univariate: bool = False
    layout: Tuple[ParamSlot, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.pair_kind not in PAIR_KINDS:
            raise ConfigurationError(f"Unknown pair kind: {self.pair_kind}")
        supports = (self.margin1.support, self.margin2.support)
        expected = {
            "binary-binary": ("binary", "binary"),
            "count-count": ("nonneg-integer", "nonneg-integer"),
            "binary-continuous": ("binary", "real"),
        }[self.pair_kind]
        if supports != expected:
            raise ConfigurationError(
                f"Pair kind {self.pair_kind} needs margins with supports {expected}, "
                f"got {self.margin1.family_id} ({supports[0]}) and "
                f"{self.margin2.family_id} ({supports[1]})")
        if self.univariate and self.copula.family_id != "gauss":
            raise ConfigurationError("Univariate benchmark pins the Gauss copula at independence")
        slots = []
        for block, family, suffix in (("margin1", self.margin1, "1"),
                                      ("margin2", self.margin2, "2")):
            for index, (name, link_id) in enumerate(zip(family.param_names, family.links)):
                slots.append(ParamSlot(f"{name}{suffix}", block, index, link_id))
        slots.append(ParamSlot("theta", "copula", 0, self.copula.theta_link))
        object.__setattr__(self, "layout", tuple(slots))

    @property
    def n_params(self) -> int:
        return self.margin1.n_params + self.margin2.n_params + 1

    @property
    def param_names(self) -> List[str]:
        return [slot.name for slot in self.layout]

    @property
    def copula_index(self) -> int:
        return self.n_params - 1

    def as_univariate(self) -> "ModelSpec":
        """Independence comparator: Gauss copula frozen at theta = 0."""
        return ModelSpec(self.pair_kind, self.margin1, self.margin2, CopulaSpec("gauss"), True)

    def to_dict(self) -> Dict:
        return {
            "pair_kind": self.pair_kind,
            "margin1": self.margin1.to_dict(),
            "margin2": self.margin2.to_dict(),
            "copula": self.copula.to_dict(),
            "univariate": self.univariate,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ModelSpec":
        return cls(
            data["pair_kind"],
            MarginFamily(data["margin1"]["family"], tuple(data["margin1"].get("links") or ())),
            MarginFamily(data["margin2"]["family"], tuple(data["margin2"].get("links") or ())),
            CopulaSpec(data["copula"]["family"], int(data["copula"].get("rotation", 0))),
            bool(data.get("univariate", False)),
        )


@dataclass
class ParamState:
    """Distribution parameters for a batch of observations."""
    margin1: List[np.ndarray]
    margin2: List[np.ndarray]
    theta: np.ndarray

    def columns(self) -> List[np.ndarray]:
        return list(self.margin1) + list(self.margin2) + [self.theta]

    def replaced(self, k: int, value: np.ndarray, k1: int) -> "ParamState":
        m1, m2, theta = list(self.margin1), list(self.margin2), self.theta
        if k < k1:
            m1[k] = value
        elif k < k1 + len(m2):
            m2[k - k1] = value
        else:
            theta = value
        return ParamState(m1, m2, theta)


def _eta_matrix(spec: ModelSpec, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[None, :]
    if eta.shape[1] != spec.n_params:
        raise ConfigurationError(
            f"Predictor matrix has {eta.shape[1]} columns, model needs {spec.n_params}")
    bad = ~np.isfinite(eta)
    if np.any(bad):
        raise NumericError("Non-finite additive predictor", index=int(np.argwhere(bad)[0, 0]))
    return eta


def param_state(spec: ModelSpec, eta) -> ParamState:
    """Response-transform an n x K predictor matrix into distribution parameters."""
    eta = _eta_matrix(spec, eta)
    k1, k2 = spec.margin1.n_params, spec.margin2.n_params
    p1 = params_from_eta(spec.margin1, [eta[:, j] for j in range(k1)])
    p2 = params_from_eta(spec.margin2, [eta[:, k1 + j] for j in range(k2)])
    theta = theta_response(spec.copula, eta[:, k1 + k2])
    return ParamState(p1, p2, theta)


def responses(spec: ModelSpec, eta) -> np.ndarray:
    """n x K matrix of distribution parameters."""
    return np.column_stack(param_state(spec, eta).columns())


def binary_cell_masses(spec: ModelSpec, p1, p2, theta) -> np.ndarray:
    """n x 4 masses of the cells (1, 1), (1, 0), (0, 1), (0, 0)."""
    p11 = copula_cdf(spec.copula, p1, p2, theta)
    return np.column_stack([p11, p1 - p11, p2 - p11, 1.0 - p1 - p2 + p11])


def _log_floor(x):
    return np.log(np.maximum(x, MASS_FLOOR))


def _nll_from_state(spec: ModelSpec, y1: np.ndarray, y2: np.ndarray, state: ParamState) -> np.ndarray:
    cop = spec.copula
    if spec.pair_kind == "binary-binary":
        p1, p2 = state.margin1[0], state.margin2[0]
        spec.margin1.kernel.check([p1])
        spec.margin2.kernel.check([p2])
        cells = binary_cell_masses(spec, p1, p2, state.theta)
        index = np.where(y1 == 1, np.where(y2 == 1, 0, 1), np.where(y2 == 1, 2, 3))
        mass = cells[np.arange(len(index)), index]
        return -_log_floor(mass)

    if spec.pair_kind == "count-count":
        f1 = np.exp(margin_logpdf(spec.margin1, y1, state.margin1))
        f2 = np.exp(margin_logpdf(spec.margin2, y2, state.margin2))
        big1 = margin_cdf(spec.margin1, y1, state.margin1)
        big2 = margin_cdf(spec.margin2, y2, state.margin2)
        low1 = np.clip(big1 - f1, 0.0, 1.0)
        low2 = np.clip(big2 - f2, 0.0, 1.0)
        mass = (copula_cdf(cop, big1, big2, state.theta)
                - copula_cdf(cop, low1, big2, state.theta)
                - copula_cdf(cop, big1, low2, state.theta)
                + copula_cdf(cop, low1, low2, state.theta))
        return -_log_floor(mass)

    # binary-continuous: margin1 is the binary component
    p = state.margin1[0]
    spec.margin1.kernel.check([p])
    u0 = 1.0 - p
    v = margin_cdf(spec.margin2, y2, state.margin2)
    h = copula_hfun(cop, u0, v, state.theta, wrt=2)
    log_f2 = margin_logpdf(spec.margin2, y2, state.margin2)
    return -((1.0 - y1) * _log_floor(h) + y1 * _log_floor(1.0 - h) + log_f2)


def _checked_responses(spec: ModelSpec, y1, y2) -> Tuple[np.ndarray, np.ndarray]:
    y1 = check_support(spec.margin1, np.atleast_1d(y1))
    y2 = check_support(spec.margin2, np.atleast_1d(y2))
    if y1.shape != y2.shape:
        raise DomainError(f"Response lengths differ: {y1.shape[0]} vs {y2.shape[0]}")
    return y1, y2


def _finite_or_raise(values: np.ndarray, what: str) -> np.ndarray:
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericError(f"Non-finite {what}", index=int(np.flatnonzero(bad)[0]))
    return values


def pointwise_nll(spec: ModelSpec, y1, y2, eta) -> np.ndarray:
    """Per-observation loss -l_i."""
    y1, y2 = _checked_responses(spec, y1, y2)
    state = param_state(spec, eta)
    with np.errstate(all="ignore"):
        values = _nll_from_state(spec, y1, y2, state)
    return _finite_or_raise(np.broadcast_to(values, y1.shape).astype(float), "loss")


def joint_nll(spec: ModelSpec, y1, y2, eta) -> float:
    """Summed negative log-likelihood over the given observations."""
    return float(np.sum(pointwise_nll(spec, y1, y2, eta)))


def marginal_nll(family: MarginFamily, y, eta_block) -> np.ndarray:
    """Per-observation negative log-density of one margin from its predictor block."""
    eta_block = np.atleast_2d(np.asarray(eta_block, dtype=float))
    params = params_from_eta(family, [eta_block[:, j] for j in range(family.n_params)])
    return -margin_logpdf(family, y, params)


def _step_scale(link_id: str, value: np.ndarray) -> np.ndarray:
    """Distance from the parameter to the edge of its range, used to size difference steps."""
    if link_id in ("logit", "probit", "cloglog"):
        return np.minimum(value, 1.0 - value)
    if link_id == "log":
        return value
    if link_id == "atanh":
        return 1.0 - np.abs(value)
    if link_id == "log_minus_one":
        return value - 1.0
    if link_id == "log_negative":
        return -value
    if link_id == "log_negative_minus_one":
        return -value - 1.0
    return np.maximum(1.0, np.abs(value))


def _clamp_for_gradient(link_id: str, value: np.ndarray) -> np.ndarray:
    if link_id in _PROBABILITY_LINKS:
        return np.clip(value, GRADIENT_PROB_CLAMP, 1.0 - GRADIENT_PROB_CLAMP)
    if link_id == "atanh":
        return np.clip(value, -1.0 + GRADIENT_PROB_CLAMP, 1.0 - GRADIENT_PROB_CLAMP)
    return value


def nll_gradient(spec: ModelSpec, y1, y2, eta, params: Sequence[int] = None) -> np.ndarray:
    """
    Derivative of the per-observation loss with respect to each predictor.

    The response-function layer is differentiated analytically (dtheta/deta);
    the likelihood is differentiated in the parameter by central differences
    with a step proportional to the parameter's distance from its range edge.

    Args:
        spec: model specification
        y1, y2: responses
        eta: n x K predictor matrix
        params: optional subset of parameter indices to differentiate

    Returns:
        n x K matrix of +d(-l_i)/d(eta_k); columns not requested are zero
    """
    y1, y2 = _checked_responses(spec, y1, y2)
    eta = _eta_matrix(spec, eta)
    state = param_state(spec, eta)
    k1 = spec.margin1.n_params
    columns = state.columns()
    grad = np.zeros(eta.shape)
    indices = range(spec.n_params) if params is None else params
    for k in indices:
        slot = spec.layout[k]
        link = get_link(slot.link)
        with np.errstate(all="ignore"):
            dtheta = link.dresponse(eta[:, k])
        value = _clamp_for_gradient(slot.link, columns[k])
        base_state = state.replaced(k, value, k1)
        step = GRADIENT_REL_STEP * _step_scale(slot.link, value)
        step = np.where(step > 0.0, step, GRADIENT_REL_STEP)
        with np.errstate(all="ignore"):
            up = _nll_from_state(spec, y1, y2, base_state.replaced(k, value + step, k1))
            down = _nll_from_state(spec, y1, y2, base_state.replaced(k, value - step, k1))
        derivative = (up - down) / (2.0 * step)
        grad[:, k] = np.where(dtheta == 0.0, 0.0, derivative * dtheta)
    return _finite_or_raise(grad.ravel(), "gradient").reshape(grad.shape)


def stabilize(gradient, mode: str) -> np.ndarray:
    """
    Rescale one parameter's gradient vector.

    none leaves it unchanged, L2 divides by its root mean square and MAD by
    1.4826 times the median absolute deviation. A scale below 1e-12 leaves
    the vector unchanged.
    """
    g = np.asarray(gradient, dtype=float)
    if g.size == 0:
        raise DomainError("Cannot stabilize an empty gradient")
    if mode == "none":
        return g
    if mode == "L2":
        scale = np.sqrt(np.mean(g * g))
    elif mode == "MAD":
        scale = 1.4826 * np.median(np.abs(g - np.median(g)))
    else:
        raise ConfigurationError(f"Unknown stabilization: {mode}")
    if scale < 1e-12:
        return g
    return g / scale


def joint_probability(spec: ModelSpec, eta, y1=None, y2=None) -> np.ndarray:
    """
    Joint probabilities per observation.

    binary-binary gives P(Y1 = 1, Y2 = 1) = C(p1, p2); the other pair kinds
    give the joint CDF P(Y1 <= y1, Y2 <= y2) = C(F1(y1), F2(y2)).
    """
    state = param_state(spec, eta)
    if spec.pair_kind == "binary-binary":
        return copula_cdf(spec.copula, state.margin1[0], state.margin2[0], state.theta)
    if y1 is None or y2 is None:
        raise DomainError("Joint CDF needs evaluation points y1 and y2")
    u = margin_cdf(spec.margin1, y1, state.margin1)
    v = margin_cdf(spec.margin2, y2, state.margin2)
    return copula_cdf(spec.copula, u, v, state.theta)
