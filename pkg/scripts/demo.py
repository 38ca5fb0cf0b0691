#!/usr/bin/env python3
# scripts/demo.py

"""
A quick tour of viforge on the correlated-linear example:

  1. Generates data where X1 and X2 are correlated
  2. Trains the full model and shows its training history
  3. Estimates VI of X1 by early stopping, dropout and retraining
  4. Prints stopping diagnostics for the warm start
  5. Prints sampled Shapley values
"""

import sys

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from viforge.data.dataset import DropSpec, SplitPlan, drop_features, split
from viforge.data.generators import gen_correlated_linear
from viforge.importance.fitted import fit_full_model, validation_rng
from viforge.importance.shapley import shapley
from viforge.importance.vi import estimate_vi_dropout, estimate_vi_earlystop, estimate_vi_retrain, wald_ci
from viforge.mlp.config import MlpConfig
from viforge.numerics.rng import RngStream
from viforge.stopping.diagnostics import compute_diagnostics
from viforge.stopping.policy import PatiencePolicy
from viforge.utils.logging.setup import setup_logging

console = Console()

# ——— CONFIGURATION ———
SEED = 7
RHO = 0.5
N = 1000
BETA = [1.5, 1.2, 1.0, 0.0, 0.0, 0.0]
MODEL = MlpConfig(widths=[6, 128, 1], eta0=0.5)
POLICY = PatiencePolicy(patience=10, max_epochs=500)


def main() -> int:
    setup_logging("WARNING")
    rng = RngStream(seed=SEED)

    console.print(Panel.fit(f"[bold]viforge demo[/bold]  rho={RHO}  N={N}  seed={SEED}"))

    # 1. Data
    data, truth = gen_correlated_linear(RHO, BETA, 1.0, 1.0, N, rng.child("data"))
    train, holdout = split(data, SplitPlan(q=0.75, rng=rng.child("split")))
    console.print(f"train {train.n_samples} rows, holdout {holdout.n_samples} rows, true VI(X1) = {truth:.4f}")

    # 2. Full model
    with console.status("Training full model..."):
        full, history = fit_full_model(MODEL, train, POLICY, rng.child("replicate"))
    console.print(
        f"[green]✔[/green] full model: best epoch {history.best_epoch}, "
        f"stopped at {history.stopped_epoch}{' (truncated)' if history.truncated else ''}"
    )

    # 3. VI by three methods
    table = Table(title="VI of X1")
    for column in ("method", "vi_hat", "95% CI", "error", "wall ms"):
        table.add_column(column, justify="right" if column != "method" else "left")
    with console.status("Estimating VI..."):
        estimates = [
            estimate_vi_earlystop(
                full, train, holdout, [0], POLICY, rng.child("train"),
                split_rng=validation_rng(rng.child("replicate")),
            ),
            estimate_vi_dropout(full, holdout, [0], train=train),
            estimate_vi_retrain(train, holdout, [0], MODEL, POLICY, rng.child("replicate"), full_model=full),
        ]
    for est in map(wald_ci, estimates):
        table.add_row(
            est.method,
            f"{est.vi_hat:.4f}",
            f"[{est.ci[0]:.3f}, {est.ci[1]:.3f}]",
            f"{est.vi_hat - truth:+.4f}",
            f"{est.wall_ms:.0f}",
        )
    console.print(table)

    # 4. Diagnostics at the warm start
    spec = DropSpec.from_means(train, [0])
    rows = train.subset(np.arange(min(400, train.n_samples)))
    dropped = drop_features(rows, spec)
    kernel = full.kernel(dropped.x)
    # E[Y | X_-1] with E[X1 | X2] = rho * X2
    truth_reduced = rows.x[:, 1:] @ np.asarray(BETA[1:]) + BETA[0] * RHO * rows.x[:, 1]
    sigma = float(np.sqrt(BETA[0] ** 2 * (1 - RHO**2) + 1.0))
    diag = compute_diagnostics(kernel, full.predict(dropped.x) - truth_reduced, sigma=sigma)
    diag_table = Table(title="Stopping diagnostics (first 400 training rows)")
    diag_table.add_column("quantity")
    diag_table.add_column("value", justify="right")
    for key, value in diag.summary().items():
        diag_table.add_row(key, f"{value:.5g}" if isinstance(value, float) else str(value))
    console.print(diag_table)

    # 5. Shapley
    with console.status("Sampling Shapley values (dropout)..."):
        phi = shapley(train, holdout, MODEL, m_samples=20, vi_method="dropout",
                      rng=rng.child("subset"), policy=POLICY, full_model=full)
    shap_table = Table(title="Shapley values (dropout, 20 permutations)")
    shap_table.add_column("feature")
    shap_table.add_column("phi", justify="right")
    shap_table.add_column("std err", justify="right")
    for name, value, se in zip(phi.feature_names, phi.phi, phi.std_err):
        shap_table.add_row(name, f"{value:.4f}", f"{se:.4f}")
    console.print(shap_table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
