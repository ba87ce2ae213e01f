"""
Simulation Module

Synthetic bivariate data for the three benchmark scenarios (binary-binary,
count-count and binary-continuous responses) plus user-defined predictors.
Covariates and responses are generated in fixed row blocks, each seeded from
the master seed and the block number, so the output does not depend on how
the work is split.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json
from scipy import linalg

from copula_config import DEFAULT_PARTITION, SIMULATION_BLOCK_SIZE, TOEPLITZ_RHO
from copula_errors import ConfigurationError, DomainError
from copulas import CopulaSpec, copula_sample_rng
from likelihood import ModelSpec, param_state
from margins import make_family, margin_quantile

logger = logging.getLogger(__name__)

COVARIATE_MODES = ("toeplitz-gaussian", "iid-uniform01")
PARTITION_FRACTIONS = (2.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0)
_COVARIATE_STREAM, _RESPONSE_STREAM = 0, 1


class _Columns:
    """x(j) returns covariate x_j as a float array."""

    def __init__(self, frame: pd.DataFrame):
        self.frame = frame

    def __call__(self, j: int) -> np.ndarray:
        return self.frame[f"x{j}"].to_numpy(dtype=float)


@dataclass(frozen=True)
class Preset:
    name: str
    spec: ModelSpec
    covariate_mode: str
    predictors: Dict[str, Callable[[_Columns], np.ndarray]]
    informative: Dict[str, Tuple[str, ...]]

    @property
    def min_p(self) -> int:
        used = [int(c[1:]) for cols in self.informative.values() for c in cols]
        return max(used) if used else 1


_BINARY = ModelSpec("binary-binary", make_family("bernoulli", ["probit"]),
                    make_family("bernoulli", ["cloglog"]), CopulaSpec("gauss"))
_COUNT = ModelSpec("count-count", make_family("zalg"), make_family("zinbi"), CopulaSpec("joe"))
_MIXED = ModelSpec("binary-continuous", make_family("bernoulli", ["probit"]),
                   make_family("gaussian"), CopulaSpec("clayton", 270))

PRESETS: Dict[str, Preset] = {
    "s1-binary-linear": Preset(
        "s1-binary-linear", _BINARY, "toeplitz-gaussian",
        {
            "mu1": lambda x: -1.0 * x(2) + 0.5 * x(3) + 1.0 * x(4) - 0.5 * x(6),
            "mu2": lambda x: 0.5 * x(1) - 1.0 * x(2) + 0.75 * x(3),
            "theta": lambda x: 0.5 * x(2) - 1.5 * x(3) + 1.5 * x(4),
        },
        {"mu1": ("x2", "x3", "x4", "x6"), "mu2": ("x1", "x2", "x3"),
         "theta": ("x2", "x3", "x4")},
    ),
    "s2-count-linear": Preset(
        "s2-count-linear", _COUNT, "iid-uniform01",
        {
            "mu1": lambda x: -1.0 * x(1) + 1.0 * x(3),
            "sigma1": lambda x: 1.0 * x(4) + 1.0 * x(5) - 2.0 * x(8),
            "mu2": lambda x: 1.5 * x(1) - 1.5 * x(2),
            "sigma2": lambda x: -0.75 * x(2) + 1.0 * x(4),
            "nu2": lambda x: -0.75 * x(2) + 1.0 * x(3),
            "theta": lambda x: -0.5 * x(2) + 1.5 * x(3) + 1.5 * x(5),
        },
        {"mu1": ("x1", "x3"), "sigma1": ("x4", "x5", "x8"), "mu2": ("x1", "x2"),
         "sigma2": ("x2", "x4"), "nu2": ("x2", "x3"), "theta": ("x2", "x3", "x5")},
    ),
    "s2-count-nonlinear": Preset(
        "s2-count-nonlinear", _COUNT, "iid-uniform01",
        {
            "mu1": lambda x: 0.5 * (x(1) ** 1.5 - 2.0 * np.cos(3.0 * x(1))),
            "sigma1": lambda x: -80.0 * (x(3) ** 1.5 - x(3) ** (4.0 / 3.0)),
            "mu2": lambda x: -0.7 * np.exp(x(2) ** 2) + np.exp(x(2) ** 0.4),
            "sigma2": lambda x: 3.0 - 1.5 * (1.5 * np.cos(2.0 * x(5)) + 3.0 * np.tanh(x(5))),
            "nu2": lambda x: -3.0 - 0.7 * (np.sin(x(1)) - np.exp(x(1)) ** 2),
            "theta": lambda x: 2.0 * np.sin(4.0 * x(4)),
        },
        {"mu1": ("x1",), "sigma1": ("x3",), "mu2": ("x2",), "sigma2": ("x5",),
         "nu2": ("x1",), "theta": ("x4",)},
    ),
    "s3-mixed-linear": Preset(
        "s3-mixed-linear", _MIXED, "iid-uniform01",
        {
            "mu1": lambda x: 1.5 * x(2) - 1.0 * x(3) + 1.5 * x(4),
            "mu2": lambda x: 0.5 * x(2) + 1.5 * x(3),
            "sigma2": lambda x: 1.0 * x(5),
            "theta": lambda x: 1.5 * x(5) - 1.5 * x(6),
        },
        {"mu1": ("x2", "x3", "x4"), "mu2": ("x2", "x3"), "sigma2": ("x5",),
         "theta": ("x5", "x6")},
    ),
    "s3-mixed-nonlinear": Preset(
        "s3-mixed-nonlinear", _MIXED, "iid-uniform01",
        {
            "mu1": lambda x: 0.5 * (x(1) ** 1.5 - 2.0 * np.cos(3.0 * x(1))),
            "mu2": lambda x: -0.7 * np.exp(x(1) ** 2) + np.exp(x(1) ** 0.4),
            "sigma2": lambda x: -0.5 + np.cos(2.0 * x(2)),
            "theta": lambda x: -1.0 + 3.0 * np.sin(4.0 * x(3)),
        },
        {"mu1": ("x1",), "mu2": ("x1",), "sigma2": ("x2",), "theta": ("x3",)},
    ),
}


@dataclass_json
@dataclass
class DgpSpec:
    """
    Data generating process.

    preset names one of PRESETS or custom; a custom process needs a model
    specification (ModelSpec.to_dict layout) and one predictor expression
    per parameter name, written over columns x1..xp.
    """
    preset: str
    n: int = sum(DEFAULT_PARTITION)
    p: int = 10
    covariate_mode: Optional[str] = None
    seed: int = 1
    rho: float = TOEPLITZ_RHO
    model: Optional[Dict] = None
    expressions: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.preset != "custom" and self.preset not in PRESETS:
            raise ConfigurationError(
                f"Unknown preset {self.preset}; use custom or one of {', '.join(PRESETS)}")
        if self.n < 1 or self.p < 1:
            raise ConfigurationError("n and p must be at least 1")
        if self.covariate_mode is not None and self.covariate_mode not in COVARIATE_MODES:
            raise ConfigurationError(f"Unknown covariate mode: {self.covariate_mode}")
        if not -1.0 < self.rho < 1.0:
            raise ConfigurationError(f"Toeplitz correlation must lie in (-1, 1), got {self.rho}")
        if self.preset == "custom":
            if self.model is None:
                raise ConfigurationError("A custom preset needs a model specification")
            unknown = set(self.expressions) - set(self.spec.param_names)
            if unknown:
                raise ConfigurationError(f"Expressions for unknown parameters: {sorted(unknown)}")
        elif self.p < PRESETS[self.preset].min_p:
            raise ConfigurationError(
                f"Preset {self.preset} needs at least {PRESETS[self.preset].min_p} covariates")

    @property
    def spec(self) -> ModelSpec:
        if self.preset == "custom":
            return ModelSpec.from_dict(self.model)
        return PRESETS[self.preset].spec

    @property
    def mode(self) -> str:
        if self.covariate_mode is not None:
            return self.covariate_mode
        if self.preset == "custom":
            return "iid-uniform01"
        return PRESETS[self.preset].covariate_mode

    @property
    def covariate_names(self) -> List[str]:
        return [f"x{j}" for j in range(1, self.p + 1)]


@dataclass
class SimulatedData:
    """A simulated sample with its true predictors and informative covariates."""
    frame: pd.DataFrame
    eta: np.ndarray
    spec: ModelSpec
    informative: Dict[str, Tuple[str, ...]]

    def truth_frame(self) -> pd.DataFrame:
        columns = {f"eta_{name}": self.eta[:, k] for k, name in enumerate(self.spec.param_names)}
        return pd.DataFrame(columns)

    def informative_frame(self) -> pd.DataFrame:
        rows = [{"param": name, "covariate": cov}
                for name in self.spec.param_names for cov in self.informative.get(name, ())]
        return pd.DataFrame(rows, columns=["param", "covariate"])


def _blocks(n: int):
    for b, start in enumerate(range(0, n, SIMULATION_BLOCK_SIZE)):
        yield b, start, min(start + SIMULATION_BLOCK_SIZE, n)


def gen_covariates(dgp: DgpSpec) -> pd.DataFrame:
    """
    Draw the n x p covariate matrix.

    toeplitz-gaussian draws multivariate normal rows with corr(x_i, x_j) =
    rho^|i - j|; iid-uniform01 draws independent U[0, 1] entries.
    """
    mode = dgp.mode
    chol = None
    if mode == "toeplitz-gaussian":
        chol = linalg.cholesky(linalg.toeplitz(dgp.rho ** np.arange(dgp.p)), lower=True)
    out = np.empty((dgp.n, dgp.p))
    for b, start, stop in _blocks(dgp.n):
        rng = np.random.default_rng([dgp.seed, _COVARIATE_STREAM, b])
        if chol is None:
            out[start:stop] = rng.uniform(size=(stop - start, dgp.p))
        else:
            out[start:stop] = rng.standard_normal(size=(stop - start, dgp.p)) @ chol.T
    return pd.DataFrame(out, columns=dgp.covariate_names)


def _as_frame(x_row) -> Tuple[pd.DataFrame, bool]:
    if isinstance(x_row, pd.DataFrame):
        return x_row, False
    if isinstance(x_row, (pd.Series, dict)):
        return pd.DataFrame([dict(x_row)]), True
    values = np.asarray(x_row, dtype=float)
    single = values.ndim == 1
    values = np.atleast_2d(values)
    return pd.DataFrame(values, columns=[f"x{j}" for j in range(1, values.shape[1] + 1)]), single


def _custom_eta(dgp: DgpSpec, frame: pd.DataFrame) -> np.ndarray:
    spec = dgp.spec
    eta = np.zeros((len(frame), spec.n_params))
    for k, name in enumerate(spec.param_names):
        expr = dgp.expressions.get(name)
        if not expr:
            continue
        try:
            value = frame.eval(expr, engine="python")
        except Exception as e:
            raise ConfigurationError(f"Cannot evaluate predictor for {name}: {expr!r}: {e}")
        eta[:, k] = np.broadcast_to(np.asarray(value, dtype=float), (len(frame),))
    return eta


def preset_eta(preset: Union[str, DgpSpec], x_row) -> np.ndarray:
    """
    True additive predictors of a preset.

    Args:
        preset: preset name or a DgpSpec (needed for custom expressions)
        x_row: one covariate row (sequence indexed x1, x2, ..., dict or Series)
            or a DataFrame of rows

    Returns:
        K-vector for a single row, n x K matrix for a frame
    """
    frame, single = _as_frame(x_row)
    if isinstance(preset, DgpSpec) and preset.preset == "custom":
        eta = _custom_eta(preset, frame)
    else:
        name = preset.preset if isinstance(preset, DgpSpec) else preset
        if name not in PRESETS:
            raise ConfigurationError(f"Unknown preset: {name}")
        entry = PRESETS[name]
        x = _Columns(frame)
        eta = np.column_stack([
            np.broadcast_to(np.asarray(entry.predictors[param](x), dtype=float), (len(frame),))
            for param in entry.spec.param_names
        ])
    return eta[0] if single else eta


def informative_covariates(dgp: DgpSpec) -> Dict[str, Tuple[str, ...]]:
    """Covariates with a non-zero true effect, per parameter name."""
    if dgp.preset != "custom":
        return dict(PRESETS[dgp.preset].informative)
    result = {}
    for name in dgp.spec.param_names:
        tokens = set(re.findall(r"\bx\d+\b", dgp.expressions.get(name, "")))
        result[name] = tuple(c for c in dgp.covariate_names if c in tokens)
    return result


def draw_pairs(spec: ModelSpec, eta, rng: np.random.Generator,
               n_draws: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sample responses from the bivariate distribution at given predictors.

    A copula pair (u, v) is drawn per sample and carried to the margins:
    binary-binary sets y_j = 1 when the uniform is at most p_j (so that
    P(1, 1) = C(p1, p2)); the binary component of a mixed pair is 0 when
    u <= 1 - p, its latent CDF at zero; counts and continuous margins use
    the quantile function.

    Args:
        spec: model specification
        eta: n x K predictor matrix
        rng: random generator
        n_draws: samples per row

    Returns:
        Tuple (y1, y2) of n x n_draws arrays
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    n = eta.shape[0]
    rows = np.repeat(eta, n_draws, axis=0)
    state = param_state(spec, rows)
    u, v = copula_sample_rng(spec.copula, state.theta, rows.shape[0], rng)
    if spec.pair_kind == "binary-binary":
        y1 = (u <= state.margin1[0]).astype(float)
        y2 = (v <= state.margin2[0]).astype(float)
    elif spec.pair_kind == "count-count":
        y1 = margin_quantile(spec.margin1, u, state.margin1)
        y2 = margin_quantile(spec.margin2, v, state.margin2)
    else:
        y1 = (u > 1.0 - state.margin1[0]).astype(float)
        y2 = margin_quantile(spec.margin2, v, state.margin2)
    return y1.reshape(n, n_draws), y2.reshape(n, n_draws)


def gen_response(dgp: DgpSpec, covariates: pd.DataFrame) -> Tuple[np.ndarray, np.ndarray]:
    """Draw (y1, y2) at the true predictors of every covariate row."""
    missing = [c for c in dgp.covariate_names if c not in covariates.columns]
    if missing:
        raise ConfigurationError(f"Covariates do not match the process: missing {missing[:3]}")
    eta = preset_eta(dgp, covariates)
    return _responses_from_eta(dgp, eta)


def _responses_from_eta(dgp: DgpSpec, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    spec = dgp.spec
    y1 = np.empty(len(eta))
    y2 = np.empty(len(eta))
    for b, start, stop in _blocks(len(eta)):
        rng = np.random.default_rng([dgp.seed, _RESPONSE_STREAM, b])
        try:
            d1, d2 = draw_pairs(spec, eta[start:stop], rng)
        except DomainError as e:
            index = start + e.index if e.index is not None else None
            raise DomainError(f"Preset {dgp.preset} produced an invalid parameter", index=index)
        y1[start:stop], y2[start:stop] = d1[:, 0], d2[:, 0]
    return y1, y2


def partition_counts(n: int) -> Tuple[int, int, int]:
    """Sizes of the train, mstop and test partitions."""
    if n == sum(DEFAULT_PARTITION):
        return DEFAULT_PARTITION
    n_train = int(round(n * PARTITION_FRACTIONS[0]))
    n_mstop = int(round(n * PARTITION_FRACTIONS[1]))
    return n_train, n_mstop, n - n_train - n_mstop


def partition_labels(n: int) -> np.ndarray:
    n_train, n_mstop, n_test = partition_counts(n)
    return np.array(["train"] * n_train + ["mstop"] * n_mstop + ["test"] * n_test)


def simulate(dgp: DgpSpec) -> SimulatedData:
    """
    Generate a full dataset: covariates, responses and partition labels.

    Returns:
        SimulatedData whose frame has columns y1, y2, x1..xp, partition
    """
    covariates = gen_covariates(dgp)
    eta = preset_eta(dgp, covariates)
    y1, y2 = _responses_from_eta(dgp, eta)
    frame = pd.concat([pd.DataFrame({"y1": y1, "y2": y2}), covariates], axis=1)
    frame["partition"] = partition_labels(dgp.n)
    logger.info(f"Simulated {dgp.n} rows from {dgp.preset} with {dgp.p} covariates "
                f"(seed {dgp.seed})")
    return SimulatedData(frame, eta, dgp.spec, informative_covariates(dgp))
