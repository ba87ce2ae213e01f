"""
Model file persistence.

A fitted model is written as versioned JSON holding the model specification,
the prepared base-learners (knots, levels, penalty weights), offsets, the
ensemble of applied updates, aggregated coefficients and a trace summary.
Python floats survive the JSON round trip exactly, so a reloaded model
predicts identically.
"""

import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np
from dataclasses_json.undefined import UndefinedParameterError

from baselearners import BaseLearner
from boosting import BoostTrace, EnsembleEntry, FittedModel
from copula_config import MODEL_FILE_VERSION
from copula_errors import ConfigurationError, InputError
from likelihood import ModelSpec

logger = logging.getLogger(__name__)


def trace_summary(trace: Optional[BoostTrace], m_opt: Optional[int] = None) -> Dict:
    if trace is None or not len(trace):
        return {"iterations": 0}
    oob = trace.oobag_risks
    summary = {
        "iterations": len(trace),
        "final_train_risk": float(trace.train_risks[-1]),
        "final_oobag_risk": float(oob[-1]) if np.isfinite(oob[-1]) else None,
    }
    if m_opt is not None:
        summary["m_opt"] = int(m_opt)
        summary["train_risk_at_m_opt"] = float(trace.train_risks[m_opt - 1]) if m_opt else None
    return summary


def model_to_dict(model: FittedModel, trace: Optional[BoostTrace] = None,
                  m_opt: Optional[int] = None) -> Dict:
    aggregated = [{"param": k, "learner": j, "coefficients": coef.tolist()}
                  for (k, j), coef in sorted(model.aggregated.items())]
    return {
        "version": MODEL_FILE_VERSION,
        "config_hash": model.config_hash,
        "seed": model.seed,
        "spec": model.spec.to_dict(),
        "learners": [[learner.to_dict() for learner in defs] for defs in model.learners],
        "offsets": [float(v) for v in model.offsets],
        "ensemble": [entry.to_dict() for entry in model.ensemble],
        "aggregated": aggregated,
        "m_used": model.m_used,
        "trace_summary": trace_summary(trace, m_opt),
        "standardization": {k: [float(m), float(s)] for k, (m, s) in model.standardization.items()},
    }


def _check_aggregated(model: FittedModel, aggregated: Optional[List[Dict]]) -> None:
    """The stored per-learner sums must equal the sums of the stored updates."""
    if aggregated is None:
        return
    try:
        stored = {(int(a["param"]), int(a["learner"])): np.asarray(a["coefficients"], dtype=float)
                  for a in aggregated}
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"Model file has a malformed aggregated entry: {e}")
    totals = model.aggregated
    if set(stored) != set(totals):
        raise InputError("Aggregated coefficients do not match the ensemble learners")
    for key, coef in totals.items():
        if stored[key].shape != coef.shape or not np.allclose(stored[key], coef, rtol=1e-12, atol=1e-12):
            raise InputError(f"Aggregated coefficients for parameter {key[0]} "
                             f"learner {key[1]} do not match the ensemble")


def model_from_dict(data: Dict) -> FittedModel:
    version = str(data.get("version", ""))
    if version.split(".")[0] != MODEL_FILE_VERSION.split(".")[0]:
        raise ConfigurationError(
            f"Model file version {version or 'missing'} is not supported "
            f"(expected {MODEL_FILE_VERSION})")
    try:
        spec = ModelSpec.from_dict(data["spec"])
        learners = [[BaseLearner.from_dict(item) for item in defs] for defs in data["learners"]]
        ensemble = [EnsembleEntry.from_dict(item) for item in data["ensemble"]]
        model = FittedModel(
            spec=spec,
            learners=learners,
            offsets=np.asarray(data["offsets"], dtype=float),
            ensemble=ensemble,
            m_used=int(data["m_used"]),
            standardization={k: (float(v[0]), float(v[1]))
                             for k, v in data.get("standardization", {}).items()},
            config_hash=data.get("config_hash", ""),
            seed=int(data.get("seed", 0)),
        )
    except KeyError as e:
        raise InputError(f"Model file lacks field {e}")
    except UndefinedParameterError as e:
        raise InputError(f"Model file has an unknown base-learner key: {e}")
    if len(model.learners) != spec.n_params or len(model.offsets) != spec.n_params:
        raise InputError("Model file does not match its specification")
    if len(model.ensemble) != model.m_used:
        raise InputError(f"Model file lists {len(model.ensemble)} updates for "
                         f"{model.m_used} iterations")
    _check_aggregated(model, data.get("aggregated"))
    return model


def save_model(model: FittedModel, path: str, trace: Optional[BoostTrace] = None,
               m_opt: Optional[int] = None) -> None:
    """Write a model file, creating the parent directory when needed."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(model_to_dict(model, trace, m_opt), f, indent=2)
    logger.info(f"Model written to {path} ({model.m_used} iterations)")


def load_model(path: str) -> FittedModel:
    """
    Read a model file.

    Raises:
        InputError: when the file is missing, not valid JSON or inconsistent
        ConfigurationError: when the file version is unsupported
    """
    if not os.path.exists(path):
        raise InputError(f"Model file not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error reading model file {path}: {e}")
        raise InputError(f"Model file {path} is not valid JSON: {e}")
    return model_from_dict(data)
