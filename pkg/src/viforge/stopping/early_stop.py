import logging
import time
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from viforge.data.dataset import Dataset, SplitPlan, split
from viforge.numerics.rng import RngStream
from viforge.stopping.diagnostics import hilbert_distance, t_max
from viforge.stopping.policy import FixedTPolicy, PatiencePolicy, TMaxPolicy

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "wall_ms"]


def half_mse(y: np.ndarray, pred: np.ndarray) -> float:
    """(1/2N)‖y − f‖²."""
    return float(0.5 * np.mean((y - pred) ** 2))


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    wall_ms: float


class TrainingHistory(BaseModel):
    """Per-epoch losses of one training run plus how it ended."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    policy: str
    records: List[EpochRecord] = []
    best_epoch: int = 0
    stopped_epoch: int = 0
    truncated: bool = False
    step: Optional[float] = None
    trajectory: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.records], columns=HISTORY_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def _iteration_rng(rng: RngStream, epoch: int) -> RngStream:
    return rng.child("tree-noise", epoch)


def early_stop_train(
    model,
    dropped_train: Dataset,
    policy: Union[PatiencePolicy, FixedTPolicy, TMaxPolicy],
    rng: RngStream,
    record_trajectory: bool = False,
    split_rng: Optional[RngStream] = None,
) -> Tuple[object, TrainingHistory]:
    """Continue training ``model`` on ``dropped_train`` until ``policy`` stops it.

    The patience rule holds out a validation part and returns the best checkpoint; the
    fixed-T and T̂_max rules train on every row for a set number of iterations.
    ``split_rng`` draws the validation rows (default ``rng.child("split")``); passing the
    stream the warm start was validated with keeps its training rows out of validation.
    """
    if isinstance(policy, PatiencePolicy):
        return _train_patience(
            model, dropped_train, policy, rng, record_trajectory, split_rng or rng.child("split")
        )

    if isinstance(policy, FixedTPolicy):
        return _train_fixed(
            model, dropped_train, policy.n_iters, policy.step, rng, record_trajectory, policy.kind
        )

    kernel = model.kernel(dropped_train.x)
    step = policy.step
    if step is None:
        lam_max = kernel.lambda_max
        step = model.kernel_step if lam_max <= 0 else min(model.kernel_step, 1.0, 1.0 / lam_max)
        if step < model.kernel_step:
            logger.info(f"Step reduced to {step:.4g} so that step <= 1/lambda_max")
    n_iters = t_max(kernel.eigenvalues, policy.c_h, policy.sigma, step)
    logger.info(f"T_max rule: {n_iters} iterations (C_H={policy.c_h:.4g}, sigma={policy.sigma})")
    return _train_fixed(model, dropped_train, n_iters, step, rng, record_trajectory, policy.kind)


def c_h_from_models(model, reference_preds, x) -> float:
    """C_H between a warm start and reference predictions on ``x``, against the warm start's kernel."""
    kernel = model.kernel(x)
    return hilbert_distance(kernel, model.predict(x) - np.asarray(reference_preds, dtype=np.float64))


def _train_fixed(model, data: Dataset, n_iters: int, step, rng, record_trajectory, kind):
    history = TrainingHistory(policy=kind, step=step)
    if n_iters == 0:
        if record_trajectory:
            history.trajectory = model.predict(data.x)[None, :]
        return model, history

    session = model.training_session(data.x, data.y, step=step)
    trajectory = [session.train_pred.copy()] if record_trajectory else None
    for epoch in range(1, n_iters + 1):
        start = time.perf_counter()
        session.step(_iteration_rng(rng, epoch))
        train_loss = half_mse(data.y, session.train_pred)
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                wall_ms=(time.perf_counter() - start) * 1000.0,
            )
        )
        if trajectory is not None:
            trajectory.append(session.train_pred.copy())
        logger.debug(f"epoch {epoch}: train_loss={train_loss:.6g}")

    history.best_epoch = n_iters
    history.stopped_epoch = n_iters
    if trajectory is not None:
        history.trajectory = np.vstack(trajectory)
    return session.snapshot(), history


def _train_patience(model, data: Dataset, policy: PatiencePolicy, rng, record_trajectory, split_rng):
    history = TrainingHistory(policy=policy.kind)
    if policy.max_epochs == 0:
        history.truncated = True
        return model, history

    # 1. Inner split of the dropped training data
    inner_train, inner_val = split(data, SplitPlan(q=policy.q_val, rng=split_rng))
    session = model.training_session(inner_train.x, inner_train.y, x_val=inner_val.x)

    best_model = model
    best_loss = half_mse(inner_val.y, session.val_pred)
    best_epoch = 0
    trajectory = [session.train_pred.copy()] if record_trajectory else None

    # 2. One iteration per epoch until patience runs out
    stopped = False
    epoch = 0
    for epoch in range(1, policy.max_epochs + 1):
        start = time.perf_counter()
        session.step(_iteration_rng(rng, epoch))
        train_loss = half_mse(inner_train.y, session.train_pred)
        val_loss = half_mse(inner_val.y, session.val_pred)
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                wall_ms=(time.perf_counter() - start) * 1000.0,
            )
        )
        if trajectory is not None:
            trajectory.append(session.train_pred.copy())

        if val_loss < best_loss - policy.min_delta:
            best_loss, best_epoch = val_loss, epoch
            best_model = session.snapshot()
        elif epoch - best_epoch >= policy.patience:
            stopped = True
            break

    history.best_epoch = best_epoch
    history.stopped_epoch = epoch
    history.truncated = not stopped
    if trajectory is not None:
        history.trajectory = np.vstack(trajectory)

    # 3. Report
    if stopped:
        logger.info(f"Early stop at epoch {epoch}; best epoch {best_epoch} (val {best_loss:.6g})")
    else:
        logger.info(
            f"Reached max_epochs={policy.max_epochs} without {policy.patience} stale epochs; "
            f"best epoch {best_epoch}"
        )
    return best_model, history
