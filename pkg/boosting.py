"""
Boosting Module

Non-cyclic component-wise gradient boosting for distributional copula
regression. Each iteration evaluates the negative gradient for every
distribution parameter, fits all candidate base-learners, and applies only
the single (parameter, learner) update that lowers the training risk most.
Out-of-bag risk is tracked per iteration for early stopping.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json

from baselearners import BaseLearner, CandidateFit, bl_design, prepare
from copula_config import (DEFAULT_MSTOP, DEFAULT_OFFSET_MODE, DEFAULT_STABILIZATION,
                           DEFAULT_STEP, DEFAULT_THREADS)
from copula_errors import ConfigurationError, DomainError, InputError, NumericError
from likelihood import ModelSpec, joint_nll, nll_gradient, responses, stabilize
from margins import margin_offset

logger = logging.getLogger(__name__)

STABILIZATIONS = ("none", "L2", "MAD")
OFFSET_MODES = ("mle", "zero")


@dataclass_json
@dataclass
class BoostConfig:
    s_step: float = DEFAULT_STEP
    m_stop: int = DEFAULT_MSTOP
    stabilization: str = DEFAULT_STABILIZATION
    seed: int = 1
    offset_mode: str = DEFAULT_OFFSET_MODE
    threads: int = DEFAULT_THREADS

    def __post_init__(self):
        if not 0.0 < self.s_step < 1.0:
            raise ConfigurationError(f"s_step must lie in (0, 1), got {self.s_step}")
        if self.m_stop < 0:
            raise ConfigurationError(f"m_stop must be non-negative, got {self.m_stop}")
        if self.stabilization not in STABILIZATIONS:
            raise ConfigurationError(f"Unknown stabilization: {self.stabilization}")
        if self.offset_mode not in OFFSET_MODES:
            raise ConfigurationError(f"Unknown offset mode: {self.offset_mode}")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")


@dataclass
class Dataset:
    """Responses, covariates and the train/out-of-bag partition."""
    y1: np.ndarray
    y2: np.ndarray
    covariates: pd.DataFrame
    train: np.ndarray
    oobag: np.ndarray

    def __post_init__(self):
        self.y1 = np.asarray(self.y1, dtype=float)
        self.y2 = np.asarray(self.y2, dtype=float)
        self.train = np.asarray(self.train, dtype=bool)
        self.oobag = np.asarray(self.oobag, dtype=bool)
        self.covariates = self.covariates.reset_index(drop=True)
        n = len(self.y1)
        if not (len(self.y2) == len(self.covariates) == len(self.train) == len(self.oobag) == n):
            raise InputError("Dataset columns have different lengths")
        if np.any(self.train & self.oobag):
            raise InputError("An observation is both training and out-of-bag",
                             row=int(np.flatnonzero(self.train & self.oobag)[0]))
        if not np.any(self.train):
            raise InputError("Dataset has no training observations")

    @property
    def n(self) -> int:
        return len(self.y1)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, covariates: Optional[Sequence[str]] = None,
                   partition_column: str = "partition") -> "Dataset":
        """
        Build a dataset from a frame with y1, y2, covariates and a partition column.

        Rows labelled train form the training set and rows labelled mstop the
        out-of-bag set; other rows (test) are dropped. Without a partition
        column every row is used for training.
        """
        for column in ("y1", "y2"):
            if column not in frame.columns:
                raise InputError(f"Missing response column {column}")
        if covariates is None:
            covariates = [c for c in frame.columns if c not in ("y1", "y2", partition_column)]
        missing = [c for c in covariates if c not in frame.columns]
        if missing:
            raise InputError(f"Missing covariate columns: {', '.join(missing)}")
        used = frame[["y1", "y2", *covariates]]
        nan_rows = np.flatnonzero(used.isna().any(axis=1).to_numpy())
        if nan_rows.size:
            raise InputError("Missing values are not supported", row=int(nan_rows[0]))
        if partition_column in frame.columns:
            part = frame[partition_column].astype(str).to_numpy()
            keep = np.isin(part, ("train", "mstop"))
            frame, part = frame.loc[keep], part[keep]
            train, oobag = part == "train", part == "mstop"
        else:
            train = np.ones(len(frame), dtype=bool)
            oobag = np.zeros(len(frame), dtype=bool)
        return cls(frame["y1"].to_numpy(), frame["y2"].to_numpy(),
                   frame[list(covariates)].reset_index(drop=True), train, oobag)


@dataclass_json
@dataclass
class EnsembleEntry:
    """One applied update; coefficients are already scaled by the step length."""
    iteration: int
    param: int
    learner: int
    coefficients: List[float]


@dataclass
class TraceRecord:
    iteration: int
    param: int
    param_name: str
    learner_id: str
    train_risk: float
    oobag_risk: float
    candidate_risks: List[float]


@dataclass
class BoostTrace:
    records: List[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def oobag_risks(self) -> np.ndarray:
        return np.array([r.oobag_risk for r in self.records], dtype=float)

    @property
    def train_risks(self) -> np.ndarray:
        return np.array([r.train_risk for r in self.records], dtype=float)

    def to_frame(self, param_names: Sequence[str]) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row = {"iteration": r.iteration, "param": r.param_name, "learner": r.learner_id,
                   "train_risk": r.train_risk, "oobag_risk": r.oobag_risk}
            for name, risk in zip(param_names, r.candidate_risks):
                row[f"trial_risk_{name}"] = risk
            rows.append(row)
        columns = ["iteration", "param", "learner", "train_risk", "oobag_risk",
                   *[f"trial_risk_{name}" for name in param_names]]
        return pd.DataFrame(rows, columns=columns)


@dataclass
class FittedModel:
    spec: ModelSpec
    learners: List[List[BaseLearner]]
    offsets: np.ndarray
    ensemble: List[EnsembleEntry] = field(default_factory=list)
    m_used: int = 0
    standardization: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0

    @property
    def aggregated(self) -> Dict[Tuple[int, int], np.ndarray]:
        """Summed coefficient vector per (parameter, learner)."""
        totals: Dict[Tuple[int, int], np.ndarray] = {}
        for entry in self.ensemble:
            key = (entry.param, entry.learner)
            coef = np.asarray(entry.coefficients, dtype=float)
            totals[key] = totals[key] + coef if key in totals else coef.copy()
        return totals

    def truncate(self, m: int) -> "FittedModel":
        """Model state after the first m iterations."""
        if m < 0 or m > self.m_used:
            raise ConfigurationError(f"Cannot truncate a model with {self.m_used} iterations to {m}")
        return FittedModel(self.spec, self.learners, self.offsets.copy(),
                           [e for e in self.ensemble if e.iteration <= m], m,
                           dict(self.standardization), self.config_hash, self.seed)


def default_learners(spec: ModelSpec, covariates: Sequence[str], kind: str = "linear",
                     df: Optional[float] = None, categorical: Iterable[str] = (),
                     overrides: Optional[Dict[str, List[BaseLearner]]] = None,
                     **options) -> List[List[BaseLearner]]:
    """
    One candidate per covariate for every parameter.

    Args:
        spec: model specification (the copula parameter gets no learners in
            the univariate benchmark)
        covariates: covariate column names
        kind: linear or pspline for continuous covariates
        df: optional degrees of freedom for all smooth/categorical learners
        categorical: covariates to treat with the categorical ridge learner
        overrides: explicit learner lists keyed by parameter name
        **options: n_inner_knots, degree, diff_order for P-spline learners

    Returns:
        Per-parameter lists of base-learners
    """
    categorical = set(categorical)
    overrides = overrides or {}

    def make(covariate: str) -> BaseLearner:
        if covariate in categorical:
            return BaseLearner("categorical", covariate, df=df)
        if kind == "pspline":
            return BaseLearner("pspline", covariate, df=df, **options)
        return BaseLearner(kind, covariate)

    result = []
    for k, name in enumerate(spec.param_names):
        if name in overrides:
            result.append(list(overrides[name]))
        elif spec.univariate and k == spec.copula_index:
            result.append([])
        else:
            result.append([make(c) for c in covariates])
    return result


def standardize_covariates(dataset: Dataset, skip: Iterable[str] = ()) -> Dict[str, Tuple[float, float]]:
    """Training-row mean and standard deviation of every numeric covariate."""
    skip = set(skip)
    stats = {}
    for column in dataset.covariates.columns:
        if column in skip or not pd.api.types.is_numeric_dtype(dataset.covariates[column]):
            continue
        values = dataset.covariates[column].to_numpy(dtype=float)[dataset.train]
        sd = float(np.std(values))
        stats[column] = (float(np.mean(values)), sd if sd > 0 else 1.0)
    return stats


def apply_standardization(frame: pd.DataFrame, stats: Dict[str, Tuple[float, float]]) -> pd.DataFrame:
    if not stats:
        return frame
    frame = frame.copy()
    for column, (mean, sd) in stats.items():
        if column in frame.columns:
            frame[column] = (frame[column].astype(float) - mean) / sd
    return frame


def _column(frame: pd.DataFrame, learner: BaseLearner):
    if learner.kind == "intercept":
        return None
    if learner.covariate not in frame.columns:
        raise InputError(f"Missing covariate column {learner.covariate}")
    return frame[learner.covariate].to_numpy()


def _learner_key(learner: BaseLearner) -> Tuple:
    return (learner.kind, learner.covariate, learner.df, learner.n_inner_knots,
            learner.degree, learner.diff_order)


def compute_offsets(spec: ModelSpec, dataset: Dataset, mode: str) -> np.ndarray:
    if mode == "zero":
        return np.zeros(spec.n_params)
    train = dataset.train
    eta1 = margin_offset(spec.margin1, dataset.y1[train])
    eta2 = margin_offset(spec.margin2, dataset.y2[train])
    return np.concatenate([eta1, eta2, [0.0]])


def fit(spec: ModelSpec, dataset: Dataset, learner_defs: List[List[BaseLearner]],
        config: BoostConfig, standardize: bool = False,
        config_hash: str = "") -> Tuple[FittedModel, BoostTrace]:
    """
    Run the boosting algorithm.

    Args:
        spec: model specification
        dataset: responses, covariates and partition
        learner_defs: candidate base-learners per parameter (an empty list freezes
            that parameter at its offset)
        config: boosting configuration
        standardize: standardize numeric covariates on the training rows
        config_hash: hash of the run configuration, stored in the model

    Returns:
        Tuple of (FittedModel, BoostTrace)
    """
    if len(learner_defs) != spec.n_params:
        raise ConfigurationError(
            f"Need learner lists for {spec.n_params} parameters, got {len(learner_defs)}")
    if spec.univariate and learner_defs[spec.copula_index]:
        raise ConfigurationError("The univariate benchmark does not boost the copula parameter")
    active = [k for k, defs in enumerate(learner_defs) if defs]
    if not active:
        raise ConfigurationError("At least one parameter needs base-learners")

    categorical = {l.covariate for defs in learner_defs for l in defs if l.kind == "categorical"}
    scaling = standardize_covariates(dataset, skip=categorical) if standardize else {}
    covariates = apply_standardization(dataset.covariates, scaling)

    train, oobag = dataset.train, dataset.oobag
    y1_train, y2_train = dataset.y1[train], dataset.y2[train]
    y1_oob, y2_oob = dataset.y1[oobag], dataset.y2[oobag]
    weights = train.astype(float)

    offsets = compute_offsets(spec, dataset, config.offset_mode)
    logger.info(f"Offsets: {dict(zip(spec.param_names, np.round(offsets, 6)))}")

    cache: Dict[Tuple, CandidateFit] = {}
    learners: List[List[BaseLearner]] = []
    candidates: List[List[CandidateFit]] = []
    for defs in learner_defs:
        prepared, fits = [], []
        for learner in defs:
            key = _learner_key(learner)
            if key not in cache:
                x = _column(covariates, learner)
                cache[key] = CandidateFit(prepare(learner, x, weights), x, train)
            prepared.append(cache[key].learner)
            fits.append(cache[key])
        learners.append(prepared)
        candidates.append(fits)

    eta = np.tile(offsets, (dataset.n, 1))
    model = FittedModel(spec, learners, offsets, [], 0, scaling, config_hash, config.seed)
    trace = BoostTrace()
    names = spec.param_names

    def evaluate(k: int, gradient: np.ndarray):
        target = np.zeros(dataset.n)
        target[train] = stabilize(-gradient[:, k], config.stabilization)
        best = None
        for j, candidate in enumerate(candidates[k]):
            coef, fitted, rss = candidate.fit(target)
            if best is None or rss < best[3]:
                best = (j, coef, fitted, rss)
        j, coef, fitted, _ = best
        trial = eta[train].copy()
        trial[:, k] += config.s_step * fitted[train]
        risk = joint_nll(spec, y1_train, y2_train, trial)
        return k, j, coef, fitted, risk

    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for m in range(1, config.m_stop + 1):
            try:
                gradient = nll_gradient(spec, y1_train, y2_train, eta[train], params=active)
                if executor is not None:
                    results = list(executor.map(lambda k: evaluate(k, gradient), active))
                else:
                    results = [evaluate(k, gradient) for k in active]
            except NumericError as e:
                raise NumericError(f"Iteration {m}: {e}")
            except DomainError as e:
                raise DomainError(f"Iteration {m}: {e}")

            candidate_risks = [float("nan")] * spec.n_params
            chosen = None
            for k, j, coef, fitted, risk in results:
                candidate_risks[k] = risk
                if not np.isfinite(risk):
                    raise NumericError(f"Non-finite training risk at iteration {m} "
                                       f"for parameter {names[k]}")
                if chosen is None or risk < chosen[4]:
                    chosen = (k, j, coef, fitted, risk)
            k, j, coef, fitted, risk = chosen

            eta[:, k] += config.s_step * fitted
            model.ensemble.append(EnsembleEntry(m, k, j, (config.s_step * coef).tolist()))
            model.m_used = m
            oob_risk = joint_nll(spec, y1_oob, y2_oob, eta[oobag]) if np.any(oobag) else float("nan")
            if np.any(oobag) and not np.isfinite(oob_risk):
                raise NumericError(f"Non-finite out-of-bag risk at iteration {m} "
                                   f"for parameter {names[k]}")
            trace.records.append(TraceRecord(m, k, names[k], learners[k][j].learner_id,
                                             risk, oob_risk, candidate_risks))
            if m % 100 == 0 or m == config.m_stop:
                logger.info(f"Iteration {m}: train risk {risk:.4f}, oobag risk {oob_risk:.4f}")
    finally:
        if executor is not None:
            executor.shutdown()

    return model, trace


def predict(model: FittedModel, newdata: pd.DataFrame,
            at_iteration: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Additive predictors and distribution parameters for new observations.

    Args:
        model: fitted model
        newdata: frame with the covariates used by the selected learners
        at_iteration: optional iteration to evaluate at (default m_used)

    Returns:
        Tuple of (eta, theta), both n x K
    """
    n = len(newdata)
    frame = apply_standardization(newdata.reset_index(drop=True), model.standardization)
    eta = np.tile(np.asarray(model.offsets, dtype=float), (n, 1))
    if at_iteration is None or at_iteration >= model.m_used:
        contributions = sorted(model.aggregated.items())
    else:
        if at_iteration < 0:
            raise ConfigurationError(f"at_iteration must be non-negative, got {at_iteration}")
        contributions = [((e.param, e.learner), np.asarray(e.coefficients))
                         for e in model.ensemble if e.iteration <= at_iteration]
    designs: Dict[Tuple[int, int], np.ndarray] = {}
    for (k, j), coef in contributions:
        if (k, j) not in designs:
            learner = model.learners[k][j]
            x = _column(frame, learner)
            designs[(k, j)] = bl_design(learner, x if x is not None else np.zeros(n))[0]
        eta[:, k] += designs[(k, j)] @ coef
    return eta, responses(model.spec, eta)


def tune_mstop(trace) -> int:
    """Iteration with the smallest out-of-bag risk (smallest m on ties)."""
    risks = trace.oobag_risks if isinstance(trace, BoostTrace) else np.asarray(trace, dtype=float)
    if risks.size == 0:
        raise ConfigurationError("Cannot tune m_stop on an empty trace")
    if np.all(np.isnan(risks)):
        logger.warning("Trace has no out-of-bag risks; keeping all iterations")
        return int(risks.size)
    return int(np.nanargmin(risks)) + 1


def selected_covariates(model: FittedModel) -> Tuple[Dict[str, Set[str]], Dict[Tuple[str, str], int]]:
    """
    Covariates receiving at least one update, per parameter, and update counts.

    Returns:
        Tuple of ({param_name: covariates}, {(param_name, learner_id): count})
    """
    names = model.spec.param_names
    selected: Dict[str, Set[str]] = {name: set() for name in names}
    counts: Dict[Tuple[str, str], int] = {}
    for entry in model.ensemble:
        if entry.iteration > model.m_used:
            continue
        learner = model.learners[entry.param][entry.learner]
        name = names[entry.param]
        key = (name, learner.learner_id)
        counts[key] = counts.get(key, 0) + 1
        if learner.covariate is not None:
            selected[name].add(learner.covariate)
    return selected, counts


def select_by_risk(candidates: Sequence[ModelSpec], dataset: Dataset,
                   learner_builder, config: BoostConfig) -> Tuple[int, pd.DataFrame]:
    """
    Choose among model specifications (copulas, rotations or margins) by
    out-of-bag risk at each candidate's own tuned stopping iteration.

    Args:
        candidates: model specifications to compare
        dataset: data with a non-empty out-of-bag partition
        learner_builder: callable spec -> per-parameter learner lists
        config: boosting configuration shared by all candidates

    Returns:
        Tuple of (index of the best candidate, risk table)
    """
    if not np.any(dataset.oobag):
        raise InputError("Model selection by predictive risk needs out-of-bag rows")
    rows = []
    for spec in candidates:
        _, trace = fit(spec, dataset, learner_builder(spec), config)
        m_opt = tune_mstop(trace) if len(trace) else 0
        risk = float(trace.oobag_risks[m_opt - 1]) if m_opt else float("nan")
        rows.append({"pair_kind": spec.pair_kind, "margin1": spec.margin1.family_id,
                     "margin2": spec.margin2.family_id, "copula": spec.copula.label,
                     "m_opt": m_opt, "oobag_risk": risk})
        logger.info(f"Candidate {spec.copula.label} ({spec.margin1.family_id}, "
                    f"{spec.margin2.family_id}): oobag risk {risk:.4f} at m = {m_opt}")
    table = pd.DataFrame(rows)
    best = int(np.nanargmin(table["oobag_risk"].to_numpy(dtype=float)))
    return best, table
