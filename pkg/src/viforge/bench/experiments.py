import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from viforge.bench.config import ExperimentConfig, RunRecord
from viforge.data.csv_io import load_csv
from viforge.data.dataset import Dataset, DropSpec, SplitPlan, drop_features, split
from viforge.data.generators import (
    AdditiveTeacher,
    gen_correlated_linear,
    gen_highdim,
    gen_logistic,
)
from viforge.errors import ConfigError
from viforge.importance.fitted import fit_full_model, validation_rng
from viforge.importance.shapley import shapley
from viforge.importance.vi import (
    ViEstimate,
    estimate_vi_dropout,
    estimate_vi_earlystop,
    estimate_vi_retrain,
    wald_ci,
)
from viforge.numerics.rng import RngStream
from viforge.stopping.diagnostics import critical_radius, hilbert_distance, t_max
from viforge.stopping.early_stop import early_stop_train
from viforge.stopping.policy import FixedTPolicy

logger = logging.getLogger(__name__)

VI_METHODS = ("early_stop", "dropout", "retrain")


def _run_replicates(cfg: ExperimentConfig, fn: Callable, *args) -> List[RunRecord]:
    """Run ``fn(cfg, r, *args)`` for every replicate; output is ordered by seed."""
    batches = Parallel(n_jobs=cfg.n_jobs)(delayed(fn)(cfg, r, *args) for r in range(cfg.replicates))
    records = [record for batch in batches for record in batch]
    return sorted(records, key=lambda record: record.seed)


def _record(cfg: ExperimentConfig, r: int, params: dict, metrics: dict, wall_ms: float = 0.0) -> RunRecord:
    return RunRecord(
        experiment=cfg.experiment,
        seed=cfg.seed + r,
        replicate=r,
        params=params,
        metrics=metrics,
        wall_ms=wall_ms,
    )


def _split(data: Dataset, cfg: ExperimentConfig, rng: RngStream):
    return split(data, SplitPlan(q=cfg.data.q, rng=rng))


def _three_estimates(
    cfg: ExperimentConfig, full, train: Dataset, holdout: Dataset, indices, full_rng: RngStream, rng: RngStream
) -> Dict[str, ViEstimate]:
    config = cfg.estimator_config()
    return {
        "early_stop": estimate_vi_earlystop(
            full, train, holdout, indices, cfg.stop, rng, split_rng=validation_rng(full_rng)
        ),
        "dropout": estimate_vi_dropout(full, holdout, indices, train=train),
        "retrain": estimate_vi_retrain(
            train, holdout, indices, config, cfg.stop, full_rng, full_model=full
        ),
    }


# -----------------------------------------------------------------------------------------
# Rate verification
# -----------------------------------------------------------------------------------------


def _rate_replicate(cfg: ExperimentConfig, r: int) -> List[RunRecord]:
    rng = RngStream(seed=cfg.seed + r)
    config = cfg.estimator_config()
    teacher = AdditiveTeacher.build(
        cfg.model, rng.child("init"), p=max(cfg.data.p, 2), beta_1=cfg.data.beta_1,
        noise_sigma=cfg.data.sigma_eps,
    )
    sigma = teacher.reduced_noise_sigma

    records = []
    for i, n in enumerate(cfg.data.n_grid):
        # 1. Data and the warm start
        data, truth = teacher.sample(n, rng.child("data", i))
        full, _ = fit_full_model(config, data, cfg.stop, rng.child("replicate", i))
        spec = DropSpec.from_means(data, [0])
        dropped = drop_features(data, spec)

        # 2. Kernel quantities at the warm start
        start = time.perf_counter()
        kernel = full.kernel(dropped.x)
        c_h = hilbert_distance(kernel, full.predict(dropped.x) - truth)
        lam_max = kernel.lambda_max
        step = full.kernel_step if lam_max <= 0 else min(full.kernel_step, 1.0, 1.0 / lam_max)
        n_iters = t_max(kernel.eigenvalues, c_h, sigma, step)
        rho_hat = critical_radius(kernel.eigenvalues, c_h, sigma) if c_h > 0 else 0.0

        # 3. Train for T_max iterations
        reduced, history = early_stop_train(
            full, dropped, FixedTPolicy(n_iters=n_iters, step=step), rng.child("train", i),
            record_trajectory=True,
        )
        wall_ms = (time.perf_counter() - start) * 1000.0
        traj = history.trajectory
        empirical = float(np.mean((traj[-1] - truth) ** 2))
        first = float(np.mean((traj[min(1, len(traj) - 1)] - truth) ** 2))

        # 4. Population error on a fresh sample
        eval_data, eval_truth = teacher.sample(cfg.data.n_eval, rng.child("eval", i))
        population = float(np.mean((reduced.predict(drop_features(eval_data, spec).x) - eval_truth) ** 2))

        logger.info(f"rate seed={cfg.seed + r} N={n}: T_max={n_iters}, error={empirical:.4g}")
        records.append(
            _record(
                cfg, r,
                params={"n": n, "model": cfg.model},
                metrics={
                    "empirical_error": empirical,
                    "population_error": population,
                    "error_step1": first,
                    "t_max": float(n_iters),
                    "c_h": c_h,
                    "rho_hat": rho_hat,
                    "kernel_trace": kernel.trace,
                    "step": step,
                },
                wall_ms=wall_ms,
            )
        )
    return records


def run_rate_experiment(cfg: ExperimentConfig) -> List[RunRecord]:
    """Error at T̂_max against N for a warm start whose dropped feature enters additively."""
    return _run_replicates(cfg, _rate_replicate)


def rate_slope(records: Sequence[RunRecord], metric: str = "empirical_error") -> float:
    """OLS slope of log median error against log N."""
    by_n: Dict[int, List[float]] = {}
    for record in records:
        by_n.setdefault(int(record.params["n"]), []).append(record.metrics[metric])
    ns = np.array(sorted(by_n), dtype=np.float64)
    medians = np.array([np.median(by_n[int(n)]) for n in ns])
    slope, _ = np.polyfit(np.log(ns), np.log(medians), 1)
    return float(slope)


# -----------------------------------------------------------------------------------------
# Correlated linear features
# -----------------------------------------------------------------------------------------


def _corr_linear_replicate(cfg: ExperimentConfig, r: int) -> List[RunRecord]:
    rng = RngStream(seed=cfg.seed + r)
    config = cfg.estimator_config()
    records = []
    for i, rho in enumerate(cfg.data.rho_grid):
        data, truth = gen_correlated_linear(
            rho, cfg.data.beta, cfg.data.sigma_x, cfg.data.sigma_eps, cfg.data.n, rng.child("data", i)
        )
        train, holdout = _split(data, cfg, rng.child("split", i))
        full_rng = rng.child("replicate", i)
        full, _ = fit_full_model(config, train, cfg.stop, full_rng)
        estimates = _three_estimates(cfg, full, train, holdout, [0], full_rng, rng.child("train", i))
        for method, est in estimates.items():
            records.append(
                _record(
                    cfg, r,
                    params={"rho": rho, "method": method, "n": cfg.data.n},
                    metrics={
                        "vi_hat": est.vi_hat,
                        "tau_hat": est.tau_hat,
                        "truth": truth,
                        "error": est.vi_hat - truth,
                        "abs_error": abs(est.vi_hat - truth),
                        "vi_wall_ms": est.wall_ms,
                    },
                    wall_ms=est.wall_ms,
                )
            )
        logger.info(f"corr-linear seed={cfg.seed + r} rho={rho}: truth={truth:.4g}")
    return records


def run_corr_linear(cfg: ExperimentConfig) -> List[RunRecord]:
    """VI of X₁ under growing correlation with X₂, all three methods against β₁²(1−ρ²)σ²."""
    return _run_replicates(cfg, _corr_linear_replicate)


# -----------------------------------------------------------------------------------------
# High-dimensional
# -----------------------------------------------------------------------------------------


def _highdim_replicate(cfg: ExperimentConfig, r: int) -> List[RunRecord]:
    rng = RngStream(seed=cfg.seed + r)
    config = cfg.estimator_config()
    p = cfg.data.p
    data = gen_highdim(
        cfg.data.kind, p, cfg.data.n, rng.child("data"),
        noise_sigma=cfg.data.sigma_eps, teacher_sigma=cfg.data.teacher_sigma,
    )
    train, holdout = _split(data, cfg, rng.child("split"))
    full_rng = rng.child("replicate")
    full, _ = fit_full_model(config, train, cfg.stop, full_rng)

    x1 = _three_estimates(cfg, full, train, holdout, [0], full_rng, rng.child("train", 0))
    irrelevant = _three_estimates(cfg, full, train, holdout, [p - 1], full_rng, rng.child("train", 1))
    reference = x1["retrain"].vi_hat

    records = []
    for method in VI_METHODS:
        est = x1[method]
        diff = abs(est.vi_hat - reference)
        records.append(
            _record(
                cfg, r,
                params={"method": method, "p": p, "n": cfg.data.n},
                metrics={
                    "vi_x1": est.vi_hat,
                    "vi_irrelevant": irrelevant[method].vi_hat,
                    "abs_diff_vs_retrain": diff,
                    "rel_error_vs_retrain": diff / abs(reference) if reference != 0 else 0.0,
                    "vi_wall_ms": est.wall_ms,
                },
                wall_ms=est.wall_ms,
            )
        )
    logger.info(
        f"highdim seed={cfg.seed + r}: early_stop {x1['early_stop'].wall_ms:.0f} ms, "
        f"retrain {x1['retrain'].wall_ms:.0f} ms"
    )
    return records


def run_highdim(cfg: ExperimentConfig) -> List[RunRecord]:
    """VI of X₁ among many features; accuracy relative to retrain and wall-clock per method."""
    return _run_replicates(cfg, _highdim_replicate)


# -----------------------------------------------------------------------------------------
# Wald coverage
# -----------------------------------------------------------------------------------------


def _wald_replicate(cfg: ExperimentConfig, r: int) -> List[RunRecord]:
    rng = RngStream(seed=cfg.seed + r)
    config = cfg.estimator_config()
    records = []
    for i, rho in enumerate(cfg.data.rho_grid):
        data, truth = gen_correlated_linear(
            rho, cfg.data.beta, cfg.data.sigma_x, cfg.data.sigma_eps, cfg.data.n, rng.child("data", i)
        )
        train, holdout = _split(data, cfg, rng.child("split", i))
        full_rng = rng.child("replicate", i)
        full, _ = fit_full_model(config, train, cfg.stop, full_rng)
        est = wald_ci(
            estimate_vi_earlystop(
                full, train, holdout, [0], cfg.stop, rng.child("train", i),
                split_rng=validation_rng(full_rng),
            ),
            cfg.alpha,
        )
        lower, upper, _ = est.ci
        records.append(
            _record(
                cfg, r,
                params={"rho": rho, "n": cfg.data.n},
                metrics={
                    "vi_hat": est.vi_hat,
                    "truth": truth,
                    "tau_hat": est.tau_hat,
                    "half_width": (upper - lower) / 2.0,
                    "covered": 1.0 if est.covers(truth) else 0.0,
                },
                wall_ms=est.wall_ms,
            )
        )
    return records


def run_wald_coverage(cfg: ExperimentConfig) -> List[RunRecord]:
    """Empirical coverage of the Wald interval for VI of X₁ across replicates."""
    return _run_replicates(cfg, _wald_replicate)


def coverage_by_rho(records: Sequence[RunRecord]) -> Dict[float, float]:
    hits: Dict[float, List[float]] = {}
    for record in records:
        hits.setdefault(float(record.params["rho"]), []).append(record.metrics["covered"])
    return {rho: float(np.mean(v)) for rho, v in sorted(hits.items())}


# -----------------------------------------------------------------------------------------
# Shapley
# -----------------------------------------------------------------------------------------


def _shapley_records(cfg, r, train, holdout, full, full_rng, rng, methods=VI_METHODS, extra=None):
    records = []
    for method in methods:
        start = time.perf_counter()
        est = shapley(
            train, holdout, cfg.estimator_config(), m_samples=cfg.shapley_samples, mode="sampled",
            vi_method=method, rng=rng, policy=cfg.stop, full_model=full,
            split_rng=validation_rng(full_rng),
        )
        wall_ms = (time.perf_counter() - start) * 1000.0
        for j, name in enumerate(train.names):
            metrics = {"phi": float(est.phi[j]), "phi_std_err": float(est.std_err[j])}
            metrics["value_gap"] = est.value_full - est.value_empty
            if extra is not None:
                metrics.update(extra.get((name, method), {}))
            records.append(
                _record(cfg, r, params={"feature": name, "method": method}, metrics=metrics, wall_ms=wall_ms)
            )
    return records


def _shapley_logistic_replicate(cfg: ExperimentConfig, r: int) -> List[RunRecord]:
    rng = RngStream(seed=cfg.seed + r)
    data = gen_logistic(cfg.data.p, cfg.data.n, rng.child("data"))
    train, holdout = _split(data, cfg, rng.child("split"))
    full_rng = rng.child("replicate")
    full, _ = fit_full_model(cfg.estimator_config(), train, cfg.stop, full_rng)
    return _shapley_records(cfg, r, train, holdout, full, full_rng, rng.child("subset"))


def run_shapley_logistic(cfg: ExperimentConfig) -> List[RunRecord]:
    """Sampled Shapley values of a logistic-response fit, per feature and VI method."""
    return _run_replicates(cfg, _shapley_logistic_replicate)


# -----------------------------------------------------------------------------------------
# Real data
# -----------------------------------------------------------------------------------------


def _real_csv_replicate(cfg: ExperimentConfig, r: int, data: Dataset) -> List[RunRecord]:
    rng = RngStream(seed=cfg.seed + r)
    train, holdout = _split(data, cfg, rng.child("split"))
    full_rng = rng.child("replicate")
    full, _ = fit_full_model(cfg.estimator_config(), train, cfg.stop, full_rng)

    vi = {}
    for j, name in enumerate(data.names):
        for method, est in _three_estimates(cfg, full, train, holdout, [j], full_rng, rng.child("train", j)).items():
            vi[(name, method)] = {"vi_hat": est.vi_hat, "tau_hat": est.tau_hat}
    return _shapley_records(cfg, r, train, holdout, full, full_rng, rng.child("subset"), extra=vi)


def run_real_csv(cfg: ExperimentConfig, path: Optional[Union[str, Path]] = None) -> List[RunRecord]:
    """VI and sampled Shapley per feature and method on a CSV dataset; no ground truth."""
    path = path or cfg.data.csv_path
    if path is None:
        raise ConfigError("real-csv needs a data path (data.csv_path or --data)")
    data = load_csv(path, cfg.data.target_column)
    return _run_replicates(cfg, _real_csv_replicate, data)


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig], List[RunRecord]]] = {
    "rate": run_rate_experiment,
    "corr-linear": run_corr_linear,
    "highdim": run_highdim,
    "wald-coverage": run_wald_coverage,
    "shapley-logistic": run_shapley_logistic,
    "real-csv": run_real_csv,
}


def run_experiment(cfg: ExperimentConfig) -> List[RunRecord]:
    logger.info(f"Running {cfg.experiment} ({cfg.model}, seed {cfg.seed}, {cfg.replicates} replicates)")
    return EXPERIMENTS[cfg.experiment](cfg)
