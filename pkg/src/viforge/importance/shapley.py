import logging
import math
import threading
from typing import Callable, Dict, Literal, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from viforge.data.dataset import Dataset, DropSpec, drop_features
from viforge.errors import BudgetError, InvalidArgumentError
from viforge.importance.fitted import fit_full_model, init_model, validation_rng
from viforge.numerics.rng import RngStream
from viforge.stopping.early_stop import early_stop_train
from viforge.stopping.policy import PatiencePolicy

logger = logging.getLogger(__name__)

EXACT_MAX_FEATURES = 12

ShapleyMode = Literal["sampled", "exact"]


class ShapleyEstimate(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phi: np.ndarray
    std_err: np.ndarray
    n_samples: int
    mode: ShapleyMode
    method: str = "value"
    value_full: float
    value_empty: float
    feature_names: Optional[Tuple[str, ...]] = None


def shapley_weight(p: int, size: int) -> float:
    """|S|!(p − |S| − 1)!/p!."""
    return math.factorial(size) * math.factorial(p - size - 1) / math.factorial(p)


def _mask(features) -> int:
    out = 0
    for j in features:
        out |= 1 << int(j)
    return out


class SubsetCache:
    """Thread-safe value cache keyed by feature bitmask.

    Values are computed outside the lock; a concurrent duplicate computes the same
    value, and the first insert wins.
    """

    def __init__(self, value_fn: Callable[[int], float]):
        self._value_fn = value_fn
        self._values: Dict[int, float] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._values)

    def get(self, mask: int) -> float:
        with self._lock:
            if mask in self._values:
                return self._values[mask]
        value = float(self._value_fn(mask))
        with self._lock:
            return self._values.setdefault(mask, value)

    def fill(self, masks, n_jobs: int = 1) -> None:
        todo = sorted(set(masks))
        Parallel(n_jobs=n_jobs, prefer="threads")(delayed(self.get)(m) for m in todo)


def shapley_from_value(
    value_fn: Callable[[int], float],
    p: int,
    mode: ShapleyMode = "sampled",
    m: int = 50,
    rng: Optional[RngStream] = None,
    n_jobs: int = 1,
) -> ShapleyEstimate:
    """Shapley values of a set function given on feature bitmasks.

    Exact mode enumerates all 2^p subsets; sampled mode averages the marginal gain of j
    over the predecessors of j in ``m`` uniform random permutations per feature.
    """
    if p < 1:
        raise InvalidArgumentError(f"p must be at least 1, got {p}")
    cache = SubsetCache(value_fn)
    full_mask = (1 << p) - 1

    if mode == "exact":
        if p > EXACT_MAX_FEATURES:
            raise BudgetError(f"exact Shapley enumerates 2^{p} subsets (max p={EXACT_MAX_FEATURES})")
        cache.fill(range(1 << p), n_jobs=n_jobs)
        weights = [shapley_weight(p, s) for s in range(p)]
        phi = np.zeros(p)
        for j in range(p):
            bit = 1 << j
            total = 0.0
            for mask in range(1 << p):
                if mask & bit:
                    continue
                total += weights[bin(mask).count("1")] * (cache.get(mask | bit) - cache.get(mask))
            phi[j] = total
        return ShapleyEstimate(
            phi=phi,
            std_err=np.zeros(p),
            n_samples=1 << (p - 1),
            mode="exact",
            value_full=cache.get(full_mask),
            value_empty=cache.get(0),
        )

    if mode != "sampled":
        raise InvalidArgumentError(f"Unknown Shapley mode {mode!r}")
    if m < 1:
        raise InvalidArgumentError(f"m must be at least 1, got {m}")
    rng = rng or RngStream(seed=0)

    # 1. Draw every predecessor set up front so evaluation order cannot change results
    pairs = []
    for j in range(p):
        gen = rng.child("subset", j).generator()
        rows = []
        for _ in range(m):
            perm = gen.permutation(p)
            pos = int(np.flatnonzero(perm == j)[0])
            before = _mask(perm[:pos])
            rows.append((before, before | (1 << j)))
        pairs.append(rows)

    # 2. Evaluate each distinct subset once
    cache.fill([mk for rows in pairs for pair in rows for mk in pair], n_jobs=n_jobs)

    # 3. Average marginal gains
    phi = np.zeros(p)
    std = np.zeros(p)
    for j, rows in enumerate(pairs):
        gains = np.array([cache.get(with_j) - cache.get(before) for before, with_j in rows])
        phi[j] = gains.mean()
        std[j] = gains.std(ddof=1) / math.sqrt(m) if m > 1 else 0.0
    logger.debug(f"Sampled Shapley used {len(cache)} distinct subsets")
    return ShapleyEstimate(
        phi=phi,
        std_err=std,
        n_samples=m,
        mode="sampled",
        value_full=cache.get(full_mask),
        value_empty=cache.get(0),
    )


def _neg_mse(y: np.ndarray, pred: np.ndarray) -> float:
    return -float(np.mean((y - pred) ** 2))


def shapley(
    train: Dataset,
    holdout: Dataset,
    config,
    m_samples: int = 50,
    mode: ShapleyMode = "sampled",
    vi_method: str = "early_stop",
    rng: Optional[RngStream] = None,
    policy=None,
    full_model=None,
    n_jobs: int = 1,
    split_rng: Optional[RngStream] = None,
) -> ShapleyEstimate:
    """Shapley values of holdout skill, val(S) = −MSE of the model restricted to S.

    Features outside S are replaced by training means and the reduced model comes
    from ``vi_method``; val(∅) is the constant training-mean predictor. Patience-rule
    fits validate on ``split_rng``, by default the stream the full model is fitted from.
    """
    if vi_method not in ("early_stop", "dropout", "retrain"):
        raise InvalidArgumentError(f"Unknown VI method {vi_method!r}")
    rng = rng or RngStream(seed=0)
    policy = policy or PatiencePolicy()
    split_rng = split_rng or validation_rng(rng)
    if full_model is None:
        full_model, _ = fit_full_model(config, train, policy, rng)
    p = train.n_features
    full_mask = (1 << p) - 1
    y_mean = float(np.mean(train.y))

    def value(mask: int) -> float:
        if mask == 0:
            return _neg_mse(holdout.y, np.full(holdout.n_samples, y_mean))
        if mask == full_mask:
            return _neg_mse(holdout.y, full_model.predict(holdout.x))
        dropped = [j for j in range(p) if not mask & (1 << j)]
        spec = DropSpec.from_means(train, dropped)
        dropped_holdout = drop_features(holdout, spec)
        if vi_method == "dropout":
            return _neg_mse(holdout.y, full_model.predict(dropped_holdout.x))

        sub_rng = rng.child("eval", mask)
        dropped_train = drop_features(train, spec)
        if vi_method == "early_stop":
            reduced, _ = early_stop_train(full_model, dropped_train, policy, sub_rng, split_rng=split_rng)
        else:
            fresh = init_model(config, p, sub_rng.child("init"))
            reduced, _ = early_stop_train(
                fresh, dropped_train, policy, sub_rng.child("train"), split_rng=split_rng
            )
        return _neg_mse(holdout.y, reduced.predict(dropped_holdout.x))

    estimate = shapley_from_value(value, p, mode=mode, m=m_samples, rng=rng, n_jobs=n_jobs)
    logger.info(f"Shapley ({vi_method}, {mode}) over {p} features done")
    return estimate.model_copy(update={"method": vi_method, "feature_names": train.names})
