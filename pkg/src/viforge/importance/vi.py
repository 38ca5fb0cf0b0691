import logging
import math
import time
from typing import Iterable, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from viforge.data.dataset import Dataset, DropSpec, drop_features
from viforge.errors import InvalidArgumentError, UndefinedVarianceError
from viforge.gbdt.ensemble import average_predictions
from viforge.importance.fitted import fit_full_model, init_model, validation_rng
from viforge.numerics.rng import RngStream
from viforge.stopping.early_stop import early_stop_train
from viforge.stopping.policy import PatiencePolicy

logger = logging.getLogger(__name__)

ViMethod = Literal["early_stop", "dropout", "retrain"]


class ViEstimate(BaseModel):
    """VI point estimate with its per-sample score differences.

    ``ci`` is (lower, upper, alpha) once :func:`wald_ci` has been applied.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vi_hat: float
    per_sample_t: np.ndarray
    tau_hat: float = Field(ge=0.0)
    ci: Optional[Tuple[float, float, float]] = None
    method: ViMethod
    wall_ms: float = 0.0
    dropped: Tuple[int, ...] = ()

    @property
    def n_holdout(self) -> int:
        return int(self.per_sample_t.size)

    def covers(self, value: float) -> bool:
        if self.ci is None:
            raise InvalidArgumentError("no confidence interval; call wald_ci first")
        return self.ci[0] <= value <= self.ci[1]


def _normalize(indices: Iterable[int]) -> Tuple[int, ...]:
    return tuple(sorted(set(int(i) for i in indices)))


def _from_predictions(
    y: np.ndarray, full_preds: np.ndarray, reduced_preds: np.ndarray, method, wall_ms, dropped
) -> ViEstimate:
    t = (y - reduced_preds) ** 2 - (y - full_preds) ** 2
    n = t.size
    tau = math.sqrt(float(np.var(t, ddof=1)) / n) if n >= 2 else 0.0
    return ViEstimate(
        vi_hat=float(np.mean(t)),
        per_sample_t=t,
        tau_hat=tau,
        method=method,
        wall_ms=wall_ms,
        dropped=dropped,
    )


def _zero(holdout: Dataset, method) -> ViEstimate:
    return ViEstimate(
        vi_hat=0.0, per_sample_t=np.zeros(holdout.n_samples), tau_hat=0.0, method=method
    )


def estimate_vi_earlystop(
    full_model,
    train: Dataset,
    holdout: Dataset,
    indices: Iterable[int],
    policy=None,
    rng: Optional[RngStream] = None,
    n_replicates: int = 1,
    split_rng: Optional[RngStream] = None,
) -> ViEstimate:
    """Warm-start the reduced model from ``full_model`` and stop early on dropped data.

    Dropped columns take their training-portion means on both train and holdout. With
    ``n_replicates`` > 1 the reduced prediction averages independent continuations.
    ``split_rng`` should be the validation stream the full model was fitted with, so the
    patience rule validates on rows the warm start never trained on.
    """
    dropped = _normalize(indices)
    if not dropped:
        return _zero(holdout, "early_stop")
    if n_replicates < 1:
        raise InvalidArgumentError(f"n_replicates must be at least 1, got {n_replicates}")
    policy = policy or PatiencePolicy()
    rng = rng or RngStream(seed=0)

    spec = DropSpec.from_means(train, dropped)
    dropped_train = drop_features(train, spec)
    dropped_holdout = drop_features(holdout, spec)

    start = time.perf_counter()
    if n_replicates == 1:
        reduced, history = early_stop_train(full_model, dropped_train, policy, rng, split_rng=split_rng)
        reduced_preds = reduced.predict(dropped_holdout.x)
        logger.debug(f"Early-stop VI for {dropped}: best epoch {history.best_epoch}")
    else:
        models = [
            early_stop_train(
                full_model, dropped_train, policy, rng.child("replicate", r), split_rng=split_rng
            )[0]
            for r in range(n_replicates)
        ]
        reduced_preds = average_predictions(models, dropped_holdout.x)
    wall_ms = (time.perf_counter() - start) * 1000.0

    full_preds = full_model.predict(holdout.x)
    return _from_predictions(holdout.y, full_preds, reduced_preds, "early_stop", wall_ms, dropped)


def estimate_vi_dropout(
    full_model, holdout: Dataset, indices: Iterable[int], train: Optional[Dataset] = None
) -> ViEstimate:
    """Full model evaluated on mean-imputed holdout features; nothing is trained.

    Means come from ``train`` when given, otherwise from the holdout itself; the holdout
    fallback leaks holdout information into the reduced predictions and is logged.
    """
    dropped = _normalize(indices)
    if not dropped:
        return _zero(holdout, "dropout")
    if train is None:
        logger.warning(
            f"Dropout VI for {dropped}: no training data given, imputing holdout means"
        )
    spec = DropSpec.from_means(train if train is not None else holdout, dropped)
    start = time.perf_counter()
    reduced_preds = full_model.predict(drop_features(holdout, spec).x)
    full_preds = full_model.predict(holdout.x)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return _from_predictions(holdout.y, full_preds, reduced_preds, "dropout", wall_ms, dropped)


def estimate_vi_retrain(
    train: Dataset,
    holdout: Dataset,
    indices: Iterable[int],
    config,
    policy=None,
    rng: Optional[RngStream] = None,
    full_model=None,
) -> ViEstimate:
    """Train a fresh reduced model from scratch under the same stop policy.

    With ``rng`` the stream the full model was fitted from, the fresh model shares its
    initialization and validation rows.
    """
    dropped = _normalize(indices)
    policy = policy or PatiencePolicy()
    rng = rng or RngStream(seed=0)
    if full_model is None:
        full_model, _ = fit_full_model(config, train, policy, rng)

    spec = DropSpec.from_means(train, dropped)
    dropped_train = drop_features(train, spec)
    dropped_holdout = drop_features(holdout, spec)

    start = time.perf_counter()
    fresh = init_model(config, train.n_features, rng.child("init"))
    reduced, history = early_stop_train(
        fresh, dropped_train, policy, rng.child("train"), split_rng=validation_rng(rng)
    )
    wall_ms = (time.perf_counter() - start) * 1000.0
    logger.debug(f"Retrain VI for {dropped}: best epoch {history.best_epoch}")

    full_preds = full_model.predict(holdout.x)
    reduced_preds = reduced.predict(dropped_holdout.x)
    return _from_predictions(holdout.y, full_preds, reduced_preds, "retrain", wall_ms, dropped)


def wald_ci(est: ViEstimate, alpha: float = 0.05) -> ViEstimate:
    """V̂I ± z_{α/2}·τ̂."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if est.n_holdout < 2:
        raise UndefinedVarianceError(f"need at least 2 holdout samples, got {est.n_holdout}")
    half = float(norm.ppf(1.0 - alpha / 2.0)) * est.tau_hat
    return est.model_copy(update={"ci": (est.vi_hat - half, est.vi_hat + half, alpha)})
