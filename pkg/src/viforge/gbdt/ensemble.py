import logging
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from viforge.data.dataset import Dataset
from viforge.errors import InvalidArgumentError
from viforge.gbdt.config import GbdtConfig
from viforge.gbdt.kernels import stationary_kernel
from viforge.gbdt.quantizer import Quantizer, quantize
from viforge.gbdt.tree import ObliviousTree, fit_leaf_values, sample_tree
from viforge.numerics.rng import RngStream
from viforge.stopping.early_stop import early_stop_train
from viforge.stopping.kernel import KernelMatrix
from viforge.stopping.policy import FixedTPolicy, PatiencePolicy, TMaxPolicy

logger = logging.getLogger(__name__)


class GbdtEnsemble(BaseModel):
    """Boosted oblivious trees continuing from an optional warm-start ensemble.

    Prediction follows f_{τ+1} = decay·f_τ + ε·tree_τ with f_0 the warm start's
    prediction (zero without one) and decay = 1 − λε/N.
    """

    model_config = ConfigDict(frozen=True)

    family: Literal["gbdt"] = "gbdt"
    config: GbdtConfig = Field(default_factory=GbdtConfig)
    quantizer: Optional[Quantizer] = None
    trees: Tuple[ObliviousTree, ...] = ()
    learning_rate: float = Field(default=0.3, gt=0.0)
    decay: float = Field(default=1.0, gt=0.0, le=1.0)
    warm_start: Optional["GbdtEnsemble"] = None

    @property
    def is_empty(self) -> bool:
        return not self.trees and self.warm_start is None

    @property
    def n_features(self) -> Optional[int]:
        if self.quantizer is not None:
            return self.quantizer.n_features
        if self.warm_start is not None:
            return self.warm_start.n_features
        return None

    @property
    def n_trees(self) -> int:
        own = len(self.trees)
        return own + (self.warm_start.n_trees if self.warm_start is not None else 0)

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise InvalidArgumentError(f"x must be 2-D, got shape {x.shape}")
        if self.n_features is not None and x.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"ensemble expects {self.n_features} features, got {x.shape[1]}"
            )
        return x

    def contribution(self, x) -> np.ndarray:
        """Prediction of this ensemble's own trees, i.e. with f_0 = 0."""
        x = self._check_input(x)
        f = np.zeros(x.shape[0])
        return self._accumulate(f, x)

    def _accumulate(self, f: np.ndarray, x: np.ndarray) -> np.ndarray:
        if not self.trees:
            return f
        binned = self.quantizer.transform(x)
        for tree in self.trees:
            f = self.decay * f + self.learning_rate * tree.predict_binned(binned)
        return f

    def predict(self, x) -> np.ndarray:
        x = self._check_input(x)
        if self.warm_start is not None:
            f = self.warm_start.predict(x)
        else:
            f = np.zeros(x.shape[0])
        return self._accumulate(f, x)

    @property
    def kernel_step(self) -> float:
        return self.config.epsilon

    def kernel(self, x) -> KernelMatrix:
        return stationary_kernel(x, self.config)

    def training_session(self, x, y, x_val=None, step: Optional[float] = None) -> "GbdtSession":
        return GbdtSession(self, x, y, x_val=x_val, step=step)


GbdtEnsemble.model_rebuild()


def init_ensemble(config: GbdtConfig) -> GbdtEnsemble:
    """The zero model."""
    return GbdtEnsemble(config=config, learning_rate=config.epsilon)


class GbdtSession:
    """One boosting iteration per :meth:`step` on a fixed training set.

    Borders are re-quantized on the session's training data; the starting ensemble is
    kept as the warm start of every snapshot.
    """

    def __init__(self, model: GbdtEnsemble, x, y, x_val=None, step: Optional[float] = None):
        x = model._check_input(x)
        self.model = model
        self.base = None if model.is_empty else model
        self.config = model.config
        self.y = np.asarray(y, dtype=np.float64).ravel()

        self.quantizer = quantize(x, self.config.n_borders)
        self.binned = self.quantizer.transform(x)
        self.learning_rate = self.config.epsilon if step is None else step
        self.decay = 1.0 - self.config.shrink * self.learning_rate / x.shape[0]
        if self.decay <= 0:
            raise InvalidArgumentError(
                f"shrink {self.config.shrink} with step {self.learning_rate} gives decay {self.decay}"
            )
        self.trees = []

        self.train_pred = model.predict(x)
        if x_val is None:
            self.val_binned = None
            self.val_pred = None
        else:
            x_val = model._check_input(x_val)
            self.val_binned = self.quantizer.transform(x_val)
            self.val_pred = model.predict(x_val)

    def step(self, rng: RngStream) -> None:
        z = self.y - self.train_pred
        splits = sample_tree(z, self.config, self.quantizer, self.binned, rng)
        values = fit_leaf_values(splits, z, self.binned)
        tree = ObliviousTree(splits=splits, leaf_values=tuple(float(v) for v in values))
        self.trees.append(tree)

        lr, decay = self.learning_rate, self.decay
        self.train_pred = decay * self.train_pred + lr * tree.predict_binned(self.binned)
        if self.val_binned is not None:
            self.val_pred = decay * self.val_pred + lr * tree.predict_binned(self.val_binned)

    def snapshot(self) -> GbdtEnsemble:
        if not self.trees:
            return self.model
        return GbdtEnsemble(
            config=self.config,
            quantizer=self.quantizer,
            trees=tuple(self.trees),
            learning_rate=self.learning_rate,
            decay=self.decay,
            warm_start=self.base,
        )


StopArg = Union[None, int, PatiencePolicy, FixedTPolicy, TMaxPolicy]


def train_gbdt(
    cfg: GbdtConfig,
    data: Dataset,
    rng: RngStream,
    warm_start: Optional[GbdtEnsemble] = None,
    stop: StopArg = None,
) -> GbdtEnsemble:
    """Boost on ``data`` until ``stop`` fires.

    ``stop`` may be an iteration count, any stop policy, or None for ``cfg.max_iters``
    iterations. With a warm start the new trees fit the warm start's residuals.
    """
    if stop is None:
        stop = FixedTPolicy(n_iters=cfg.max_iters)
    elif isinstance(stop, int):
        stop = FixedTPolicy(n_iters=stop)

    if warm_start is None:
        model = init_ensemble(cfg)
    else:
        if warm_start.n_features is not None and warm_start.n_features != data.n_features:
            raise InvalidArgumentError(
                f"warm start has {warm_start.n_features} features, data has {data.n_features}"
            )
        model = warm_start.model_copy(update={"config": cfg})

    fitted, _ = early_stop_train(model, data, stop, rng)
    return fitted


def average_predictions(models: Sequence, x) -> np.ndarray:
    """Mean prediction over replicate models, approximating E_u f over sampler noise."""
    if not models:
        raise InvalidArgumentError("average_predictions needs at least one model")
    return np.mean([m.predict(x) for m in models], axis=0)
