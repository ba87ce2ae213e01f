"""
Command-line front end.

    python cli.py simulate --config configs/s1_binary_linear.json --out data.csv
    python cli.py fit --config configs/s1_binary_linear.json --data data.csv --model model.json
    python cli.py predict --model model.json --data data.csv --out predictions.csv
    python cli.py score --model model.json --data data.csv --out scores.csv
    python cli.py study --config configs/s1_binary_linear.json --out study --replicates 20
    python cli.py report --data study

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

import argparse
import dataclasses
import logging
import os
import sys
from typing import List, Optional

import numpy as np
import pandas as pd

from boosting import BoostTrace, Dataset, TraceRecord, fit, predict, select_by_risk, tune_mstop
from copula_config import LOG_LEVEL
from copula_errors import ConfigurationError, CopulaBoostError, InputError
from copulas import CopulaSpec, kendall_tau
from likelihood import ModelSpec, joint_probability, param_state
from margins import margin_mean, margin_variance
from model_io import load_model, save_model
from run_config import RunConfig, load_run_config
from scoring import score_model
from simulate import simulate
from study import report, run_study

logger = logging.getLogger(__name__)

COMMAND_HELP = {
    "simulate": "Generate a dataset from a preset or custom process",
    "fit": "Fit a model and write the model file and trace",
    "tune": "Pick m_stop from a trace CSV",
    "predict": "Write predictors and parameters for new rows",
    "score": "Score a model on test rows",
    "report": "Aggregate a study directory",
    "study": "Run replicated simulate, fit and score",
    "select": "Choose a copula by out-of-bag risk",
}
RESERVED_COLUMNS = ("y1", "y2", "partition")


def _config(args) -> RunConfig:
    config = load_run_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.univariate:
        changes["univariate"] = True
    if args.threads is not None:
        changes["boost"] = dataclasses.replace(config.boost, threads=args.threads)
    return dataclasses.replace(config, **changes) if changes else config


def _require(value: Optional[str], flag: str, command: str) -> str:
    if not value:
        raise ConfigurationError(f"{command} needs {flag}")
    return value


def read_data(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise InputError(f"Data file not found: {path}")
    try:
        return pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"Error reading {path}: {e}")
        raise InputError(f"Cannot parse CSV {path}: {e}")


def _covariates(config: RunConfig, frame: pd.DataFrame) -> List[str]:
    if config.learners.covariates is not None:
        return list(config.learners.covariates)
    return [c for c in frame.columns if c not in RESERVED_COLUMNS]


def _sibling(path: str, suffix: str) -> str:
    root, _ = os.path.splitext(path)
    return f"{root}{suffix}"


def cmd_simulate(args) -> int:
    config = _config(args)
    out = _require(args.out or config.paths.data, "--out", "simulate")
    data = simulate(config.dgp())
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    data.frame.to_csv(out, index=False)
    data.truth_frame().to_csv(_sibling(out, "_truth.csv"), index=False)
    data.informative_frame().to_csv(_sibling(out, "_informative.csv"), index=False)
    logger.info(f"Data written to {out}")
    return 0


def cmd_fit(args) -> int:
    config = _config(args)
    data_path = _require(args.data or config.paths.data, "--data", "fit")
    model_path = _require(args.model or config.paths.model, "--model", "fit")
    frame = read_data(data_path)
    spec = config.model_spec()
    covariates = _covariates(config, frame)
    dataset = Dataset.from_frame(frame, covariates)
    model, trace = fit(spec, dataset, config.learner_defs(spec, covariates),
                       config.boost_config(), standardize=config.boost.standardize,
                       config_hash=config.config_hash())
    m_opt = None
    if config.boost.tune and len(trace):
        m_opt = tune_mstop(trace)
        model = model.truncate(m_opt)
        logger.info(f"Tuned m_stop: {m_opt}")
    save_model(model, model_path, trace, m_opt)
    trace_path = args.out or _sibling(model_path, "_trace.csv")
    table = trace.to_frame(spec.param_names)
    table["config_hash"] = config.config_hash()
    table.to_csv(trace_path, index=False)
    logger.info(f"Trace written to {trace_path}")
    return 0


def _trace_from_csv(path: str) -> BoostTrace:
    table = read_data(path)
    for column in ("iteration", "oobag_risk"):
        if column not in table.columns:
            raise InputError(f"Trace file {path} lacks column {column}")
    trace = BoostTrace()
    for row in table.itertuples(index=False):
        trace.records.append(TraceRecord(int(row.iteration), -1, getattr(row, "param", ""),
                                         getattr(row, "learner", ""),
                                         float(getattr(row, "train_risk", np.nan)),
                                         float(row.oobag_risk), []))
    return trace


def cmd_tune(args) -> int:
    trace_path = _require(args.data, "--data (trace CSV)", "tune")
    m_opt = tune_mstop(_trace_from_csv(trace_path))
    logger.info(f"Tuned m_stop: {m_opt}")
    print(m_opt)
    if args.model and args.out:
        save_model(load_model(args.model).truncate(m_opt), args.out)
    return 0


def prediction_frame(model, frame: pd.DataFrame, at_iteration: Optional[int] = None) -> pd.DataFrame:
    """Predictors, parameters, Kendall's tau, margin moments and joint probabilities."""
    spec: ModelSpec = model.spec
    eta, theta = predict(model, frame, at_iteration)
    state = param_state(spec, eta)
    out = {}
    for k, name in enumerate(spec.param_names):
        out[f"eta_{name}"] = eta[:, k]
    for k, name in enumerate(spec.param_names):
        out[name] = theta[:, k]
    out["kendall_tau"] = kendall_tau(spec.copula, state.theta)
    for suffix, family, params in (("y1", spec.margin1, state.margin1),
                                   ("y2", spec.margin2, state.margin2)):
        out[f"mean_{suffix}"] = margin_mean(family, params)
        out[f"sd_{suffix}"] = np.sqrt(margin_variance(family, params))
    if spec.pair_kind == "binary-binary":
        out["p11"] = joint_probability(spec, eta)
    elif "y1" in frame.columns and "y2" in frame.columns:
        out["joint_cdf"] = joint_probability(spec, eta, frame["y1"].to_numpy(dtype=float),
                                             frame["y2"].to_numpy(dtype=float))
    return pd.DataFrame(out)


def cmd_predict(args) -> int:
    model = load_model(_require(args.model, "--model", "predict"))
    frame = read_data(_require(args.data, "--data", "predict"))
    out = _require(args.out, "--out", "predict")
    prediction_frame(model, frame, args.at_iteration).to_csv(out, index=False)
    logger.info(f"Predictions for {len(frame)} rows written to {out}")
    return 0


def _test_rows(frame: pd.DataFrame) -> pd.DataFrame:
    if "partition" in frame.columns and (frame["partition"] == "test").any():
        return frame[frame["partition"] == "test"].reset_index(drop=True)
    return frame


def cmd_score(args) -> int:
    config = _config(args)
    model = load_model(_require(args.model, "--model", "score"))
    frame = _test_rows(read_data(_require(args.data, "--data", "score")))
    out = _require(args.out, "--out", "score")
    if args.at_iteration is not None:
        model = model.truncate(min(args.at_iteration, model.m_used))
    result = score_model(model, frame, config.scoring.energy_samples, config.seed)
    result.to_frame("U" if model.spec.univariate else "C").to_csv(out, index=False)
    logger.info(f"Scores written to {out}")
    return 0


def cmd_report(args) -> int:
    study_dir = _require(args.data or args.out, "--data (study directory)", "report")
    summary, _ = report(study_dir)
    print(summary.to_string(index=False))
    return 0


def cmd_study(args) -> int:
    config = _config(args)
    out = _require(args.out or config.paths.out, "--out", "study")
    workers = args.threads or 1
    if workers > 1:
        # replicate processes run their fits single-threaded
        config = dataclasses.replace(config, boost=dataclasses.replace(config.boost, threads=1))
    run_study(config, out, args.replicates, workers)
    report(out)
    return 0


def cmd_select(args) -> int:
    config = _config(args)
    frame = read_data(_require(args.data or config.paths.data, "--data", "select"))
    out = _require(args.out, "--out", "select")
    base = config.model_spec()
    labels = args.candidates.split(",") if args.candidates else [base.copula.label]
    candidates = [ModelSpec(base.pair_kind, base.margin1, base.margin2,
                            CopulaSpec.from_label(label)) for label in labels]
    covariates = _covariates(config, frame)
    dataset = Dataset.from_frame(frame, covariates)
    best, table = select_by_risk(candidates, dataset,
                                 lambda spec: config.learner_defs(spec, covariates),
                                 config.boost_config())
    table.to_csv(out, index=False)
    logger.info(f"Selected copula {candidates[best].copula.label}")
    print(candidates[best].copula.label)
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "tune": cmd_tune,
    "predict": cmd_predict,
    "score": cmd_score,
    "report": cmd_report,
    "study": cmd_study,
    "select": cmd_select,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run configuration (JSON)")
    common.add_argument("--data", help="Input CSV (or trace CSV / study directory)")
    common.add_argument("--model", help="Model file (JSON)")
    common.add_argument("--out", help="Output path")
    common.add_argument("--seed", type=int, help="Override the configured seed")
    common.add_argument("--threads", type=int, help="Worker threads (processes for study)")
    common.add_argument("--univariate", action="store_true",
                        help="Fit the independence benchmark instead of the copula model")
    common.add_argument("--at-iteration", type=int, dest="at_iteration",
                        help="Evaluate the model after this many iterations")
    common.add_argument("--replicates", type=int, help="Number of study replicates")
    common.add_argument("--candidates", help="Comma-separated copula labels for select")
    common.add_argument("--log-level", dest="log_level", default=None,
                        help="Logging level (default from COPULA_BOOST_LOG_LEVEL)")

    parser = argparse.ArgumentParser(
        prog="copula-boost",
        description="Boosted distributional copula regression for bivariate responses")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, text in COMMAND_HELP.items():
        sub.add_parser(command, parents=[common], help=text)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=(args.log_level or LOG_LEVEL).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except CopulaBoostError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}")
        raise


if __name__ == "__main__":
    sys.exit(main())
