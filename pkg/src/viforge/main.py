import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from viforge.bench.config import EXPERIMENT_IDS, ExperimentConfig, RunRecord
from viforge.bench.experiments import run_experiment
from viforge.bench.records import render_summary, summarize, write_records
from viforge.config import load_config
from viforge.data.csv_io import load_csv
from viforge.data.dataset import Dataset, DropSpec, SplitPlan, drop_features, split
from viforge.errors import (
    BudgetError,
    ConfigError,
    InvalidArgumentError,
    ParseError,
    ViforgeError,
)
from viforge.importance.fitted import fit_full_model, validation_rng
from viforge.importance.shapley import shapley
from viforge.importance.vi import (
    estimate_vi_dropout,
    estimate_vi_earlystop,
    estimate_vi_retrain,
    wald_ci,
)
from viforge.numerics.rng import RngStream
from viforge.stopping.diagnostics import compute_diagnostics
from viforge.stopping.early_stop import early_stop_train
from viforge.utils.logging.setup import setup_logging

logger = logging.getLogger("viforge")
console = Console()

CLI_METHODS = {"earlystop": "early_stop", "dropout": "dropout", "retrain": "retrain"}

SUMMARY_KEYS = {
    "rate": (["n"], "median"),
    "corr-linear": (["rho", "method"], "median"),
    "highdim": (["method"], "median"),
    "wald-coverage": (["rho"], "mean"),
    "shapley-logistic": (["feature", "method"], "mean"),
    "real-csv": (["feature", "method"], "mean"),
}


def _config_from_args(args, experiment: Optional[str] = None) -> ExperimentConfig:
    overrides = {
        "experiment": experiment,
        "model": args.model,
        "seed": args.seed,
        "out_dir": getattr(args, "out", None),
        "replicates": getattr(args, "replicates", None),
        "n_jobs": getattr(args, "n_jobs", None),
    }
    return load_config(args.config, overrides)


def _parse_drop(spec: str, data: Dataset) -> List[int]:
    """Comma-separated feature names or 0-based indices."""
    out = []
    for token in (t.strip() for t in spec.split(",")):
        if not token:
            continue
        if token.isdigit():
            out.append(int(token))
        else:
            out.append(data.column_index(token))
    return out


def _load_split(args, cfg: ExperimentConfig):
    data = load_csv(args.data, args.target)
    rng = RngStream(seed=cfg.seed)
    train, holdout = split(data, SplitPlan(q=cfg.data.q, rng=rng.child("split")))
    return data, train, holdout, rng


def run_experiment_command(args) -> int:
    cfg = _config_from_args(args, experiment=args.command)
    if args.command == "real-csv" and args.data:
        cfg = cfg.model_copy(update={"data": cfg.data.model_copy(update={"csv_path": args.data})})
    records = run_experiment(cfg)
    write_records(records, cfg.out_dir, cfg.experiment, include_timing=not args.no_timing)
    by, agg = SUMMARY_KEYS[cfg.experiment]
    render_summary(summarize(records, by, agg=agg), title=f"{cfg.experiment} ({agg})", console=console)
    return 0


def run_vi(args) -> int:
    cfg = _config_from_args(args)
    data, train, holdout, rng = _load_split(args, cfg)
    indices = _parse_drop(args.drop, data)
    method = CLI_METHODS[args.method]
    full_rng = rng.child("replicate")

    if method == "retrain":
        est = estimate_vi_retrain(train, holdout, indices, cfg.estimator_config(), cfg.stop, full_rng)
    else:
        full, _ = fit_full_model(cfg.estimator_config(), train, cfg.stop, full_rng)
        if method == "early_stop":
            est = estimate_vi_earlystop(
                full, train, holdout, indices, cfg.stop, rng.child("train"),
                split_rng=validation_rng(full_rng),
            )
        else:
            est = estimate_vi_dropout(full, holdout, indices, train=train)
    est = wald_ci(est, args.alpha)

    table = Table(title=f"VI of {[data.names[i] for i in est.dropped]} ({method})")
    for column in ("vi_hat", "tau_hat", "ci_lower", "ci_upper", "wall_ms"):
        table.add_column(column, justify="right")
    table.add_row(*[f"{v:.5g}" for v in (est.vi_hat, est.tau_hat, est.ci[0], est.ci[1], est.wall_ms)])
    console.print(table)

    if args.out:
        record = RunRecord(
            experiment="vi",
            seed=cfg.seed,
            replicate=0,
            params={"method": method, "dropped": ",".join(data.names[i] for i in est.dropped)},
            metrics={"vi_hat": est.vi_hat, "tau_hat": est.tau_hat, "ci_lower": est.ci[0], "ci_upper": est.ci[1]},
            wall_ms=est.wall_ms,
        )
        write_records([record], args.out, "vi")
    return 0


def run_shapley(args) -> int:
    cfg = _config_from_args(args)
    data, train, holdout, rng = _load_split(args, cfg)
    est = shapley(
        train, holdout, cfg.estimator_config(), m_samples=args.samples, mode=args.mode,
        vi_method=CLI_METHODS[args.method], rng=rng.child("subset"), policy=cfg.stop,
        n_jobs=cfg.n_jobs,
    )
    table = Table(title=f"Shapley values ({est.method}, {est.mode})")
    table.add_column("feature")
    table.add_column("phi", justify="right")
    table.add_column("std_err", justify="right")
    for name, phi, se in zip(data.names, est.phi, est.std_err):
        table.add_row(name, f"{phi:.5g}", f"{se:.3g}")
    console.print(table)

    if args.out:
        records = [
            RunRecord(
                experiment="shapley", seed=cfg.seed, replicate=0,
                params={"feature": name, "method": est.method, "mode": est.mode},
                metrics={"phi": float(phi), "phi_std_err": float(se)},
            )
            for name, phi, se in zip(data.names, est.phi, est.std_err)
        ]
        write_records(records, args.out, "shapley")
    return 0


def run_diag(args) -> int:
    cfg = _config_from_args(args)
    data, train, holdout, rng = _load_split(args, cfg)
    full_rng = rng.child("replicate")
    full, _ = fit_full_model(cfg.estimator_config(), train, cfg.stop, full_rng)
    indices = _parse_drop(args.drop, data) if args.drop else []
    dropped = drop_features(train, DropSpec.from_means(train, indices))
    kernel = full.kernel(dropped.x)

    summary = {
        "n": kernel.n,
        "trace": kernel.trace,
        "lambda_max": kernel.lambda_max,
        "rank": kernel.eig.rank(),
    }
    if args.sigma is not None:
        # Early-stopped reduced model stands in for the unobservable reduced truth
        reduced, _ = early_stop_train(
            full, dropped, cfg.stop, rng.child("train"), split_rng=validation_rng(full_rng)
        )
        c = full.predict(dropped.x) - reduced.predict(dropped.x)
        diagnostics = compute_diagnostics(kernel, c, args.sigma)
        summary.update(diagnostics.summary())
        if args.out:
            path = Path(args.out)
            path.mkdir(parents=True, exist_ok=True)
            np.savetxt(path / "eigenvalues.csv", diagnostics.eigenvalues, delimiter=",")

    table = Table(title="Stopping diagnostics")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for key, value in summary.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        (path / "diagnostics.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["mlp", "gbdt"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)


def _add_data(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--data", required=required)
    p.add_argument("--target", default="NOX")
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viforge", description="Variable importance by warm-start early stopping"
    )
    sub = parser.add_subparsers(dest="command")

    # One subcommand per experiment
    for experiment in EXPERIMENT_IDS:
        p = sub.add_parser(experiment)
        _add_common(p)
        p.add_argument("--out", default=None)
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields from output")
        if experiment == "real-csv":
            p.add_argument("--data", default=None)

    vi_parser = sub.add_parser("vi")
    _add_common(vi_parser)
    _add_data(vi_parser)
    vi_parser.add_argument("--drop", required=True, help="feature names or 0-based indices, comma-separated")
    vi_parser.add_argument("--method", choices=sorted(CLI_METHODS), default="earlystop")
    vi_parser.add_argument("--alpha", type=float, default=0.05)

    shapley_parser = sub.add_parser("shapley")
    _add_common(shapley_parser)
    _add_data(shapley_parser)
    shapley_parser.add_argument("--samples", type=int, default=50)
    shapley_parser.add_argument("--mode", choices=["sampled", "exact"], default="sampled")
    shapley_parser.add_argument("--method", choices=sorted(CLI_METHODS), default="earlystop")

    diag_parser = sub.add_parser("diag")
    _add_common(diag_parser)
    _add_data(diag_parser)
    diag_parser.add_argument("--drop", default="")
    diag_parser.add_argument("--sigma", type=float, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()

    if args.command in EXPERIMENT_IDS:
        handler = run_experiment_command
    elif args.command == "vi":
        handler = run_vi
    elif args.command == "shapley":
        handler = run_shapley
    elif args.command == "diag":
        handler = run_diag
    else:
        parser.print_help()
        return 0

    try:
        code = handler(args)
    except BudgetError as e:
        logger.error(f"Budget exceeded: {e}")
        sys.exit(3)
    except (ConfigError, ParseError, InvalidArgumentError) as e:
        logger.error(str(e))
        sys.exit(2)
    except ViforgeError as e:
        logger.error(str(e))
        sys.exit(1)
    return code


if __name__ == "__main__":
    sys.exit(main())
