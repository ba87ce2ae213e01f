"""
Run configuration.

A run is described by one JSON file with nested sections for the model
specification, base-learners, boosting, simulation, scoring and file
paths. Unknown keys at any level are rejected; omitted keys take the
defaults from copula_config. When the margins and copula are left out, a
simulate preset supplies the model specification.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from dataclasses_json import Undefined, dataclass_json
from dataclasses_json.undefined import UndefinedParameterError

from baselearners import BaseLearner
from boosting import BoostConfig, default_learners
from copula_config import (DEFAULT_DEGREE, DEFAULT_DIFF_ORDER, DEFAULT_ENERGY_SAMPLES,
                           DEFAULT_INNER_KNOTS, DEFAULT_MSTOP, DEFAULT_OFFSET_MODE,
                           DEFAULT_PARTITION, DEFAULT_STABILIZATION, DEFAULT_STEP,
                           DEFAULT_THREADS, TOEPLITZ_RHO)
from copula_errors import ConfigurationError
from copulas import CopulaSpec
from likelihood import ModelSpec
from margins import make_family
from simulate import DgpSpec

logger = logging.getLogger(__name__)

LEARNER_KINDS = ("linear", "pspline")


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class MarginConfig:
    family: str
    links: List[str] = field(default_factory=list)


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class CopulaConfig:
    family: str = "gauss"
    rotation: int = 0


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class LearnerConfig:
    """
    Candidate base-learners.

    kind applies to every continuous covariate; categorical lists covariates
    fitted with the ridge learner; per_parameter replaces the candidate list
    of a parameter with explicit learner definitions.
    """
    kind: str = "linear"
    df: Optional[float] = None
    n_inner_knots: int = DEFAULT_INNER_KNOTS
    degree: int = DEFAULT_DEGREE
    diff_order: int = DEFAULT_DIFF_ORDER
    covariates: Optional[List[str]] = None
    categorical: List[str] = field(default_factory=list)
    per_parameter: Dict[str, List[Dict]] = field(default_factory=dict)


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class BoostSection:
    s_step: float = DEFAULT_STEP
    m_stop: int = DEFAULT_MSTOP
    stabilization: str = DEFAULT_STABILIZATION
    offset_mode: str = DEFAULT_OFFSET_MODE
    threads: int = DEFAULT_THREADS
    standardize: bool = False
    tune: bool = True


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class SimulateSection:
    preset: Optional[str] = None
    n: int = sum(DEFAULT_PARTITION)
    p: int = 10
    covariate_mode: Optional[str] = None
    rho: float = TOEPLITZ_RHO
    model: Optional[Dict] = None
    expressions: Dict[str, str] = field(default_factory=dict)


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class ScoringSection:
    energy_samples: int = DEFAULT_ENERGY_SAMPLES


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class PathsSection:
    data: Optional[str] = None
    model: Optional[str] = None
    out: Optional[str] = None


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class RunConfig:
    pair_kind: Optional[str] = None
    margin1: Optional[MarginConfig] = None
    margin2: Optional[MarginConfig] = None
    copula: Optional[CopulaConfig] = None
    univariate: bool = False
    seed: int = 1
    replicates: int = 1
    learners: LearnerConfig = field(default_factory=LearnerConfig)
    boost: BoostSection = field(default_factory=BoostSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self):
        if self.learners.kind not in LEARNER_KINDS:
            raise ConfigurationError(
                f"learners.kind must be one of {LEARNER_KINDS}, got {self.learners.kind}")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be at least 1")
        given = [self.margin1 is not None, self.margin2 is not None, self.copula is not None]
        if any(given) and not all(given):
            raise ConfigurationError("Give margin1, margin2 and copula together")
        if all(given) and self.pair_kind is None:
            raise ConfigurationError("pair_kind is required with an explicit model")

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def model_spec(self) -> ModelSpec:
        if self.copula is None:
            if not self.simulate.preset:
                raise ConfigurationError("Config needs a model (margins and copula) "
                                         "or a simulate preset")
            spec = self.dgp().spec
        else:
            spec = ModelSpec(self.pair_kind,
                             make_family(self.margin1.family, self.margin1.links),
                             make_family(self.margin2.family, self.margin2.links),
                             CopulaSpec(self.copula.family, self.copula.rotation))
        return spec.as_univariate() if self.univariate else spec

    def dgp(self, seed: Optional[int] = None) -> DgpSpec:
        if not self.simulate.preset:
            raise ConfigurationError("simulate.preset is required to generate data")
        section = self.simulate
        return DgpSpec(preset=section.preset, n=section.n, p=section.p,
                       covariate_mode=section.covariate_mode,
                       seed=self.seed if seed is None else seed, rho=section.rho,
                       model=section.model, expressions=dict(section.expressions))

    def boost_config(self, seed: Optional[int] = None) -> BoostConfig:
        section = self.boost
        return BoostConfig(s_step=section.s_step, m_stop=section.m_stop,
                           stabilization=section.stabilization,
                           seed=self.seed if seed is None else seed,
                           offset_mode=section.offset_mode, threads=section.threads)

    def learner_defs(self, spec: ModelSpec, covariates: Sequence[str]) -> List[List[BaseLearner]]:
        """Candidate learners per parameter for the given covariate columns."""
        section = self.learners
        names = section.covariates if section.covariates is not None else list(covariates)
        missing = [c for c in names if c not in covariates]
        if missing:
            raise ConfigurationError(f"Learner covariates not in the data: {missing}")
        unknown = set(section.per_parameter) - set(spec.param_names)
        if unknown:
            raise ConfigurationError(f"per_parameter names unknown parameters: {sorted(unknown)}")
        try:
            overrides = {name: [BaseLearner.from_dict(item) for item in items]
                         for name, items in section.per_parameter.items()}
        except UndefinedParameterError as e:
            raise ConfigurationError(f"Unknown base-learner key: {e}")
        except (TypeError, KeyError, AttributeError) as e:
            raise ConfigurationError(f"Invalid base-learner entry: {e}")
        return default_learners(spec, names, kind=section.kind, df=section.df,
                                categorical=section.categorical, overrides=overrides,
                                n_inner_knots=section.n_inner_knots, degree=section.degree,
                                diff_order=section.diff_order)


def parse_run_config(data: Dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("Run configuration must be a JSON object")
    try:
        return RunConfig.from_dict(data)
    except UndefinedParameterError as e:
        raise ConfigurationError(f"Unknown configuration key: {e}")
    except (TypeError, KeyError) as e:
        raise ConfigurationError(f"Invalid configuration: {e}")


def load_run_config(path: Optional[str]) -> RunConfig:
    """
    Load a run configuration from JSON; no path gives the defaults.

    Raises:
        ConfigurationError: missing file, invalid JSON, unknown keys or values
    """
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error loading config {path}: {e}")
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
    config = parse_run_config(data)
    logger.info(f"Loaded config {path} (hash {config.config_hash()[:12]})")
    return config
