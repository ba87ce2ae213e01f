"""
Base-learners Module

Regression-type base-learners fitted to pseudo-residuals by (penalized) least
squares: intercept, linear, P-spline and categorical ridge. Penalties are
calibrated to a target number of effective degrees of freedom so that
candidates of different flexibility compete on comparable terms.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from dataclasses_json import Undefined, dataclass_json
from scipy import linalg
from scipy.interpolate import BSpline

from copula_config import (DEFAULT_DEGREE, DEFAULT_DF, DEFAULT_DIFF_ORDER,
                           DEFAULT_INNER_KNOTS, DEFAULT_LINEAR_DF, DF_TOLERANCE,
                           LAMBDA_LOG_BRACKET, RIDGE_JITTER)
from copula_errors import ConfigurationError, InputError, NumericError

logger = logging.getLogger(__name__)

KINDS = ("intercept", "linear", "pspline", "categorical")


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class BaseLearner:
    """Definition of a base-learner plus the state fixed on the training data."""
    kind: str
    covariate: Optional[str] = None
    df: Optional[float] = None
    n_inner_knots: int = DEFAULT_INNER_KNOTS
    degree: int = DEFAULT_DEGREE
    diff_order: int = DEFAULT_DIFF_ORDER
    knots: List[float] = field(default_factory=list)
    levels: List[str] = field(default_factory=list)
    lam: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"Unknown base-learner kind: {self.kind}")
        if self.kind != "intercept" and not self.covariate:
            raise ConfigurationError(f"{self.kind} base-learner needs a covariate")

    @property
    def learner_id(self) -> str:
        if self.kind == "intercept":
            return "intercept"
        return f"{self.kind}({self.covariate})"

    @property
    def is_prepared(self) -> bool:
        if self.kind == "pspline":
            return bool(self.knots) and self.lam is not None
        if self.kind == "categorical":
            return bool(self.levels) and self.lam is not None
        return True

    def target_df(self, dim: int) -> float:
        if self.df is not None:
            return float(self.df)
        if self.kind in ("intercept", "linear"):
            return float(dim) if self.kind == "intercept" else DEFAULT_LINEAR_DF
        return min(DEFAULT_DF, float(dim))


@dataclass
class FittedLearner:
    coefficients: np.ndarray
    rss: float


def _pspline_knots(x: np.ndarray, n_inner: int, degree: int) -> np.ndarray:
    """Equidistant knots over the range of x, padded degree-many times on each side."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise ConfigurationError("P-spline covariate has no spread in the training data")
    if n_inner < 1:
        raise ConfigurationError("P-spline needs at least one inner knot")
    dx = (hi - lo) / (n_inner + 1)
    return lo + dx * np.arange(-degree, n_inner + 2 + degree)


def difference_penalty(dim: int, order: int) -> np.ndarray:
    """D'D for the order-th difference matrix D."""
    d = np.diff(np.eye(dim), n=order, axis=0)
    return d.T @ d


def penalty_matrix(learner: BaseLearner, dim: int) -> np.ndarray:
    if learner.kind == "pspline":
        return difference_penalty(dim, learner.diff_order)
    if learner.kind == "categorical":
        return np.eye(dim)
    return np.zeros((dim, dim))


def with_state(learner: BaseLearner, x) -> BaseLearner:
    """Fix knots or levels from training covariate values (no-op when already set)."""
    if learner.kind == "pspline" and not learner.knots:
        knots = _pspline_knots(np.asarray(x, dtype=float), learner.n_inner_knots, learner.degree)
        return dataclasses.replace(learner, knots=knots.tolist())
    if learner.kind == "categorical" and not learner.levels:
        levels = sorted(set(np.asarray(x).astype(str).tolist()))
        return dataclasses.replace(learner, levels=levels)
    return learner


def bl_design(learner: BaseLearner, x) -> Tuple[np.ndarray, np.ndarray]:
    """
    Design matrix and penalty matrix of a base-learner.

    Args:
        learner: base-learner definition (knots/levels are derived from x if unset)
        x: covariate column (ignored by the intercept)

    Returns:
        Tuple of (B, P)
    """
    learner = with_state(learner, x) if learner.kind in ("pspline", "categorical") else learner
    if learner.kind == "intercept":
        n = len(x) if x is not None else 1
        return np.ones((n, 1)), np.zeros((1, 1))

    if learner.kind == "linear":
        x = np.asarray(x, dtype=float)
        return np.column_stack([np.ones_like(x), x]), np.zeros((2, 2))

    if learner.kind == "pspline":
        x = np.asarray(x, dtype=float)
        knots = np.asarray(learner.knots, dtype=float)
        basis = BSpline.design_matrix(x, knots, learner.degree, extrapolate=True).toarray()
        return basis, difference_penalty(basis.shape[1], learner.diff_order)

    values = np.asarray(x).astype(str)
    index = {level: j for j, level in enumerate(learner.levels)}
    basis = np.zeros((len(values), len(learner.levels)))
    unseen = 0
    for i, value in enumerate(values):
        j = index.get(value)
        if j is None:
            unseen += 1
        else:
            basis[i, j] = 1.0
    if unseen:
        logger.warning(f"{unseen} rows of {learner.covariate} have levels unseen in training; "
                       f"their effect is set to zero")
    return basis, np.eye(len(learner.levels))


def _weighted_gram(basis: np.ndarray, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return basis.T @ basis
    return basis.T @ (basis * weights[:, None])


def effective_df(gram: np.ndarray, penalty: np.ndarray, lam: float) -> float:
    """trace(B (B'WB + lam P)^-1 B'W) = trace((B'WB + lam P)^-1 B'WB)."""
    system = gram + lam * penalty
    try:
        return float(np.trace(linalg.solve(system, gram, assume_a="sym")))
    except linalg.LinAlgError:
        system = system + RIDGE_JITTER * np.eye(system.shape[0])
        return float(np.trace(linalg.solve(system, gram, assume_a="sym")))


def df_to_lambda(learner: BaseLearner, basis: np.ndarray, df_target: Optional[float] = None,
                 weights: Optional[np.ndarray] = None, penalty: Optional[np.ndarray] = None) -> float:
    """
    Penalty weight giving the requested effective degrees of freedom.

    Bisection on log(lambda) in [-20, 20]; df(lambda) is decreasing.

    Raises:
        ConfigurationError: when the requested df cannot be reached
    """
    dim = basis.shape[1]
    if penalty is None:
        penalty = penalty_matrix(learner, dim)
    target = learner.target_df(dim) if df_target is None else float(df_target)
    if not np.any(penalty):
        return 0.0
    gram = _weighted_gram(basis, weights)
    rank = np.linalg.matrix_rank(gram)
    if target < 1.0 or target > rank + DF_TOLERANCE:
        raise ConfigurationError(
            f"df {target} unattainable for {learner.learner_id} (design rank {rank})")

    lo, hi = LAMBDA_LOG_BRACKET
    if effective_df(gram, penalty, np.exp(lo)) <= target + DF_TOLERANCE:
        return float(np.exp(lo))
    if effective_df(gram, penalty, np.exp(hi)) > target + DF_TOLERANCE:
        raise ConfigurationError(
            f"df {target} unattainable for {learner.learner_id}; the penalty null space is larger")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        df_mid = effective_df(gram, penalty, np.exp(mid))
        if abs(df_mid - target) < DF_TOLERANCE:
            return float(np.exp(mid))
        if df_mid > target:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def prepare(learner: BaseLearner, x, weights: Optional[np.ndarray] = None) -> BaseLearner:
    """Fix knots/levels and the penalty weight on the training rows."""
    learner = with_state(learner, _training_values(x, weights))
    basis, penalty = bl_design(learner, x)
    lam = df_to_lambda(learner, basis, weights=weights, penalty=penalty)
    return dataclasses.replace(learner, lam=lam)


def _training_values(x, weights):
    if x is None or weights is None:
        return x
    return np.asarray(x)[np.asarray(weights) > 0]


def _solve(system: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return linalg.solve(system, rhs, assume_a="pos")
    except linalg.LinAlgError:
        pass
    try:
        return linalg.solve(system + RIDGE_JITTER * np.eye(system.shape[0]), rhs, assume_a="pos")
    except linalg.LinAlgError as e:
        raise NumericError(f"Singular base-learner system: {e}")


def bl_fit(learner: BaseLearner, x, target, weights=None) -> FittedLearner:
    """
    Penalized least-squares fit of a base-learner to a pseudo-residual vector.

    Args:
        learner: base-learner (prepared or not; lambda is derived from df if missing)
        x: covariate column
        target: pseudo-residuals
        weights: optional {0, 1} training weights

    Returns:
        FittedLearner with coefficients and the training-row residual sum of squares
    """
    target = np.asarray(target, dtype=float)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != target.shape:
            raise InputError("Weights and target lengths differ")
    if learner.kind == "intercept":
        x = np.zeros(len(target)) if x is None else x
    if len(x) != len(target):
        raise InputError("Covariate and target lengths differ")
    if not learner.is_prepared:
        learner = prepare(learner, x, weights)
    basis, penalty = bl_design(learner, x)
    w = np.ones(len(target)) if weights is None else weights
    system = _weighted_gram(basis, w) + (learner.lam or 0.0) * penalty
    coefficients = _solve(system, basis.T @ (w * target))
    resid = target - basis @ coefficients
    return FittedLearner(coefficients, float(np.sum(w * resid * resid)))


def bl_predict(learner: BaseLearner, coefficients, x) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=float)
    if learner.kind == "intercept":
        n = len(x) if x is not None else 1
        return np.full(n, coefficients[0])
    basis, _ = bl_design(learner, x)
    if basis.shape[1] != coefficients.shape[0]:
        raise InputError(f"{learner.learner_id} expects {basis.shape[1]} coefficients, "
                         f"got {coefficients.shape[0]}")
    return basis @ coefficients


class CandidateFit:
    """
    A prepared base-learner with its design over all rows and a factorized
    training system, so each boosting iteration costs two matrix products.
    """

    def __init__(self, learner: BaseLearner, x, train_mask: np.ndarray):
        """
        Initialize the candidate.

        Args:
            learner: prepared base-learner
            x: covariate values for all rows (training and out-of-bag)
            train_mask: boolean mask of training rows
        """
        self.learner = learner
        n = len(train_mask)
        self.basis, penalty = bl_design(learner, x if x is not None else np.zeros(n))
        self.weights = train_mask.astype(float)
        gram = _weighted_gram(self.basis, self.weights)
        system = gram + (learner.lam or 0.0) * penalty
        try:
            self._factor = linalg.cho_factor(system)
        except linalg.LinAlgError:
            try:
                self._factor = linalg.cho_factor(system + RIDGE_JITTER * np.eye(system.shape[0]))
            except linalg.LinAlgError as e:
                raise NumericError(f"Singular system for {learner.learner_id}: {e}")
        self._weighted_basis_t = (self.basis * self.weights[:, None]).T

    def fit(self, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        """Returns (coefficients, fitted values on all rows, training rss)."""
        coefficients = linalg.cho_solve(self._factor, self._weighted_basis_t @ target)
        fitted = self.basis @ coefficients
        resid = target - fitted
        return coefficients, fitted, float(np.sum(self.weights * resid * resid))
