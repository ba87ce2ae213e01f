"""
Study Module

Replicate harness for simulation studies. Each replicate simulates a dataset,
fits the copula model (C) and the univariate benchmark (U) on the training
rows, tunes the stopping iteration on the mstop rows, scores both models on
the test rows and writes everything to its own rep_### directory. The report
step aggregates replicate directories into score and selection-rate tables.
"""

import dataclasses
import glob
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Set, Tuple

import pandas as pd

from boosting import Dataset, fit, tune_mstop
from copula_errors import InputError
from model_io import load_model, save_model
from run_config import RunConfig
from scoring import score_model, score_summary, selection_rates
from simulate import simulate

logger = logging.getLogger(__name__)

MODEL_LABELS = ("C", "U")


def replicate_dir(out_dir: str, replicate: int) -> str:
    return os.path.join(out_dir, f"rep_{replicate:03d}")


def replicate_seed(config: RunConfig, replicate: int) -> int:
    """Replicates r = 1, 2, ... use seeds config.seed, config.seed + 1, ..."""
    return config.seed + replicate - 1


def fit_and_score(config: RunConfig, frame: pd.DataFrame, label: str, seed: int,
                  directory: str) -> pd.DataFrame:
    """Fit one model label on a simulated frame, save it and score it on the test rows."""
    base = dataclasses.replace(config, univariate=(label == "U"))
    spec = base.model_spec()
    covariates = [c for c in frame.columns if c not in ("y1", "y2", "partition")]
    dataset = Dataset.from_frame(frame, covariates)
    model, trace = fit(spec, dataset, base.learner_defs(spec, covariates),
                       base.boost_config(seed), standardize=base.boost.standardize,
                       config_hash=config.config_hash())
    m_opt = tune_mstop(trace) if len(trace) else 0
    final = model.truncate(m_opt)
    save_model(final, os.path.join(directory, f"model_{label}.json"), trace, m_opt)
    test = frame[frame["partition"] == "test"].reset_index(drop=True)
    report = score_model(final, test, config.scoring.energy_samples, seed)
    scores = report.to_frame(label)
    scores.insert(0, "replicate", os.path.basename(directory))
    scores["m_opt"] = m_opt
    scores.to_csv(os.path.join(directory, f"scores_{label}.csv"), index=False)
    return scores


def run_replicate(config: RunConfig, replicate: int, out_dir: str) -> pd.DataFrame:
    """
    Run one replicate end to end.

    Args:
        config: run configuration with a simulate preset
        replicate: replicate number, starting at 1
        out_dir: study directory

    Returns:
        Score rows of both models
    """
    seed = replicate_seed(config, replicate)
    directory = replicate_dir(out_dir, replicate)
    os.makedirs(directory, exist_ok=True)
    data = simulate(config.dgp(seed))
    data.truth_frame().to_csv(os.path.join(directory, "truth.csv"), index=False)
    data.informative_frame().to_csv(os.path.join(directory, "informative.csv"), index=False)
    rows = [fit_and_score(config, data.frame, label, seed, directory) for label in MODEL_LABELS]
    logger.info(f"Replicate {replicate} done (seed {seed})")
    return pd.concat(rows, ignore_index=True)


def _run_replicate_from_dict(args: Tuple[Dict, int, str]) -> pd.DataFrame:
    data, replicate, out_dir = args
    return run_replicate(RunConfig.from_dict(data), replicate, out_dir)


def run_study(config: RunConfig, out_dir: str, replicates: Optional[int] = None,
              workers: int = 1) -> pd.DataFrame:
    """Run all replicates, in parallel processes when workers > 1."""
    count = replicates or config.replicates
    os.makedirs(out_dir, exist_ok=True)
    if workers > 1:
        jobs = [(config.to_dict(), r, out_dir) for r in range(1, count + 1)]
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_replicate_from_dict, jobs))
    else:
        results = [run_replicate(config, r, out_dir) for r in range(1, count + 1)]
    return pd.concat(results, ignore_index=True)


def _read_informative(path: str) -> Dict[str, Set[str]]:
    frame = pd.read_csv(path)
    truth: Dict[str, Set[str]] = {}
    for param, covariate in zip(frame["param"], frame["covariate"]):
        truth.setdefault(param, set()).add(covariate)
    return truth


def format_report(summary: pd.DataFrame, rates: pd.DataFrame) -> str:
    """Plain-text report with mean (sd) scores and selection rates."""
    lines = ["=" * 72, "SIMULATION STUDY REPORT", "=" * 72, ""]
    title = "SCORES: mean (sd) over replicates"
    lines += [title, "-" * len(title)]
    metrics = [c[:-5] for c in summary.columns if c.endswith("_mean")]
    for metric in metrics:
        cells = [f"{row['model']}: {row[metric + '_mean']:.3f} ({row[metric + '_sd']:.3f})"
                 for _, row in summary.iterrows()]
        lines.append(f"{metric:<16}" + "   ".join(cells))
    lines.append("")
    title = "SELECTION RATES (%)"
    lines += [title, "-" * len(title)]
    lines.append(rates.to_string(index=False, float_format=lambda v: f"{v:.1f}"))
    lines += ["", "-" * 72, "End of Report"]
    return "\n".join(lines)


def report(study_dir: str) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Aggregate replicate directories.

    Writes score_summary.csv, selection_rates.csv and report.txt into the
    study directory.

    Returns:
        Tuple of (score summary, selection rates)
    """
    directories = sorted(glob.glob(os.path.join(study_dir, "rep_*")))
    if not directories:
        raise InputError(f"No replicate directories in {study_dir}")
    scores = []
    models: Dict[str, List] = {label: [] for label in MODEL_LABELS}
    truth: Dict[str, Set[str]] = {}
    for directory in directories:
        for label in MODEL_LABELS:
            score_path = os.path.join(directory, f"scores_{label}.csv")
            model_path = os.path.join(directory, f"model_{label}.json")
            if os.path.exists(score_path):
                scores.append(pd.read_csv(score_path))
            if os.path.exists(model_path):
                models[label].append(load_model(model_path))
        informative_path = os.path.join(directory, "informative.csv")
        if not truth and os.path.exists(informative_path):
            truth = _read_informative(informative_path)
    if not scores:
        raise InputError(f"No score files under {study_dir}")

    summary = score_summary(pd.concat(scores, ignore_index=True))
    rate_frames = []
    for label, fitted in models.items():
        if fitted:
            rates = selection_rates(fitted, truth)
            rates.insert(0, "model", label)
            rate_frames.append(rates)
    rates = pd.concat(rate_frames, ignore_index=True) if rate_frames else pd.DataFrame()

    summary.to_csv(os.path.join(study_dir, "score_summary.csv"), index=False)
    rates.to_csv(os.path.join(study_dir, "selection_rates.csv"), index=False)
    with open(os.path.join(study_dir, "report.txt"), "w") as f:
        f.write(format_report(summary, rates) + "\n")
    logger.info(f"Report over {len(directories)} replicates written to {study_dir}")
    return summary, rates
