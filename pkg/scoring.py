"""
Scoring Module

Evaluation of fitted copula regression models on held-out data: the joint
log score, a Monte-Carlo energy score, per-margin Brier score, AUC and mean
squared error of prediction, and selection rates across replicate fits.
All scores are oriented so that lower is better, except AUC.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Set

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json
from scipy.spatial.distance import pdist
from sklearn.metrics import brier_score_loss, mean_squared_error, roc_auc_score

from boosting import FittedModel, predict, selected_covariates
from copula_config import DEFAULT_ENERGY_SAMPLES
from copula_errors import ConfigurationError, InputError
from likelihood import joint_nll, param_state
from margins import margin_mean
from simulate import draw_pairs

logger = logging.getLogger(__name__)

_ENERGY_CHUNK = 64


@dataclass_json
@dataclass
class ScoreReport:
    log_score: float
    energy_score: float
    n_test: int
    mc_samples: int
    margin1: Dict[str, float] = field(default_factory=dict)
    margin2: Dict[str, float] = field(default_factory=dict)
    config_hash: str = ""

    def to_frame(self, label: str = "") -> pd.DataFrame:
        """One-row frame with flat metric columns."""
        row = {"model": label, "log_score": self.log_score, "energy_score": self.energy_score}
        for prefix, metrics in (("y1", self.margin1), ("y2", self.margin2)):
            for name, value in metrics.items():
                row[f"{name}_{prefix}"] = value
        row.update({"n_test": self.n_test, "mc_samples": self.mc_samples,
                    "config_hash": self.config_hash})
        return pd.DataFrame([row])


def _responses(frame: pd.DataFrame):
    for column in ("y1", "y2"):
        if column not in frame.columns:
            raise InputError(f"Test data lacks response column {column}")
    nan_rows = np.flatnonzero(frame[["y1", "y2"]].isna().any(axis=1).to_numpy())
    if nan_rows.size:
        raise InputError("Missing response values", row=int(nan_rows[0]))
    return frame["y1"].to_numpy(dtype=float), frame["y2"].to_numpy(dtype=float)


def log_score(model: FittedModel, test: pd.DataFrame) -> float:
    """Summed joint negative log-likelihood over the test rows."""
    y1, y2 = _responses(test)
    eta, _ = predict(model, test)
    return joint_nll(model.spec, y1, y2, eta)


def energy_score_samples(samples: np.ndarray, observed: np.ndarray) -> float:
    """
    Energy score of one forecast sample against one observation.

    ES = (1/S) sum_s ||X_s - y|| - 1/(2 S^2) sum_s sum_t ||X_s - X_t||

    Args:
        samples: S x d array of forecast draws
        observed: d-vector

    Returns:
        Non-negative score (zero for a sample concentrated on the observation)
    """
    samples = np.asarray(samples, dtype=float)
    s = samples.shape[0]
    misfit = np.mean(np.linalg.norm(samples - np.asarray(observed, dtype=float)[None, :], axis=1))
    # pdist lists each unordered pair once; the double sum counts it twice
    spread = np.sum(pdist(samples)) / s ** 2
    return float(misfit - spread)


def energy_score(model: FittedModel, test: pd.DataFrame,
                 samples: int = DEFAULT_ENERGY_SAMPLES, seed: int = 1) -> float:
    """
    Mean energy score over test rows, with draws from the fitted bivariate
    distribution of every row.

    Args:
        model: fitted model
        test: frame with responses and covariates
        samples: draws per row (S >= 2)
        seed: seed of the sampling generator

    Returns:
        Average energy score
    """
    if samples < 2:
        raise ConfigurationError(f"Energy score needs at least 2 samples, got {samples}")
    y1, y2 = _responses(test)
    eta, _ = predict(model, test)
    rng = np.random.default_rng(seed)
    scores = np.empty(len(y1))
    for start in range(0, len(y1), _ENERGY_CHUNK):
        stop = min(start + _ENERGY_CHUNK, len(y1))
        d1, d2 = draw_pairs(model.spec, eta[start:stop], rng, n_draws=samples)
        for i in range(stop - start):
            draws = np.column_stack([d1[i], d2[i]])
            scores[start + i] = energy_score_samples(draws, (y1[start + i], y2[start + i]))
    return float(np.mean(scores))


def _margin(model: FittedModel, margin: int):
    if margin not in (1, 2):
        raise ConfigurationError(f"margin must be 1 or 2, got {margin}")
    return model.spec.margin1 if margin == 1 else model.spec.margin2


def _predicted_params(model: FittedModel, test: pd.DataFrame, margin: int):
    eta, _ = predict(model, test)
    state = param_state(model.spec, eta)
    return state.margin1 if margin == 1 else state.margin2


def _observed(test: pd.DataFrame, margin: int) -> np.ndarray:
    return _responses(test)[margin - 1]


def _require_binary(model: FittedModel, margin: int, metric: str) -> None:
    if _margin(model, margin).support != "binary":
        raise ConfigurationError(f"{metric} needs a binary margin; margin {margin} is "
                                 f"{_margin(model, margin).family_id}")


def brier(model: FittedModel, test: pd.DataFrame, margin: int) -> float:
    """Mean squared difference between predicted success probability and outcome."""
    _require_binary(model, margin, "Brier score")
    p = _predicted_params(model, test, margin)[0]
    return float(brier_score_loss(_observed(test, margin), p))


def auc(model: FittedModel, test: pd.DataFrame, margin: int) -> float:
    """Area under the ROC curve of the predicted success probabilities."""
    _require_binary(model, margin, "AUC")
    y = _observed(test, margin)
    if np.unique(y).size < 2:
        raise InputError(f"AUC is undefined: margin {margin} has a single class in the test data")
    p = _predicted_params(model, test, margin)[0]
    return float(roc_auc_score(y, p))


def msep(model: FittedModel, test: pd.DataFrame, margin: int) -> float:
    """Mean squared error of the predicted margin mean."""
    family = _margin(model, margin)
    if family.support == "binary":
        raise ConfigurationError(f"MSEP needs a count or continuous margin; margin {margin} "
                                 f"is {family.family_id}")
    mean = margin_mean(family, _predicted_params(model, test, margin))
    return float(mean_squared_error(_observed(test, margin), mean))


def _margin_metrics(model: FittedModel, test: pd.DataFrame, margin: int) -> Dict[str, float]:
    if _margin(model, margin).support == "binary":
        metrics = {"brier": brier(model, test, margin)}
        try:
            metrics["auc"] = auc(model, test, margin)
        except InputError as e:
            logger.warning(str(e))
            metrics["auc"] = float("nan")
        return metrics
    return {"msep": msep(model, test, margin)}


def score_model(model: FittedModel, test: pd.DataFrame,
                samples: int = DEFAULT_ENERGY_SAMPLES, seed: int = 1) -> ScoreReport:
    """Every applicable score of a model on a test frame."""
    report = ScoreReport(
        log_score=log_score(model, test),
        energy_score=energy_score(model, test, samples, seed) if samples > 0 else float("nan"),
        n_test=len(test),
        mc_samples=samples,
        margin1=_margin_metrics(model, test, 1),
        margin2=_margin_metrics(model, test, 2),
        config_hash=model.config_hash,
    )
    logger.info(f"Scores on {report.n_test} rows: log {report.log_score:.4f}, "
                f"energy {report.energy_score:.4f}")
    return report


def selection_rates(models: Sequence[FittedModel],
                    truth: Dict[str, Set[str]]) -> pd.DataFrame:
    """
    Percentage of informative and non-informative covariates selected, per parameter.

    Args:
        models: replicate fits sharing one model specification
        truth: informative covariates per parameter name

    Returns:
        Frame with columns param, informative_rate, noninformative_rate,
        n_informative, n_noninformative, n_models (rates are NaN where a
        group is empty or the parameter has no learners)
    """
    if not models:
        raise InputError("No models to aggregate")
    spec = models[0].spec
    for model in models[1:]:
        if model.spec.to_dict() != spec.to_dict():
            raise InputError("Selection rates need models with one specification")

    selections = [selected_covariates(model)[0] for model in models]
    rows = []
    for k, name in enumerate(spec.param_names):
        candidates = {l.covariate for l in models[0].learners[k] if l.covariate is not None}
        informative = set(truth.get(name, ())) & candidates
        noise = candidates - informative
        inf_rate, noise_rate = [], []
        for selected in selections:
            chosen = selected.get(name, set())
            if informative:
                inf_rate.append(100.0 * len(chosen & informative) / len(informative))
            if noise:
                noise_rate.append(100.0 * len(chosen & noise) / len(noise))
        rows.append({
            "param": name,
            "informative_rate": float(np.mean(inf_rate)) if inf_rate else float("nan"),
            "noninformative_rate": float(np.mean(noise_rate)) if noise_rate else float("nan"),
            "n_informative": len(informative),
            "n_noninformative": len(noise),
            "n_models": len(models),
        })
    return pd.DataFrame(rows)


def score_summary(scores: pd.DataFrame, by: Optional[str] = "model") -> pd.DataFrame:
    """Mean and standard deviation of every numeric score column per model label."""
    metrics = [c for c in scores.columns
               if c not in (by, "replicate", "n_test", "mc_samples", "config_hash")
               and pd.api.types.is_numeric_dtype(scores[c])]
    grouped = scores.groupby(by, sort=True)[metrics]
    mean = grouped.mean().add_suffix("_mean")
    sd = grouped.std(ddof=1).add_suffix("_sd")
    ordered = [col for m in metrics for col in (f"{m}_mean", f"{m}_sd")]
    return pd.concat([mean, sd], axis=1)[ordered].reset_index()
