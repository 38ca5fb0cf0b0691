import logging
import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import expit

from viforge.errors import BudgetError, InvalidArgumentError, NumericOverflowError
from viforge.mlp.config import MlpConfig, effective_step, kernel_step
from viforge.numerics.rng import RngStream
from viforge.stopping.kernel import KernelMatrix

logger = logging.getLogger(__name__)

JACOBIAN_ENTRY_CAP = 2**27
CHECKPOINT_VERSION = 1


def _activate(kind: str, h: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(h, 0.0)
    return np.logaddexp(0.0, h)


def _activate_grad(kind: str, h: np.ndarray) -> np.ndarray:
    if kind == "relu":
        # derivative at 0 is 0
        return (h > 0.0).astype(np.float64)
    return expit(h)


class MlpCheckpoint(BaseModel):
    version: int = CHECKPOINT_VERSION
    config: MlpConfig
    weights: List[List[List[float]]]
    biases: List[List[float]]


class MlpModel(BaseModel):
    """Network parameters; immutable, every update returns a new model.

    Under NTK parameterization the raw ω, β ~ N(0, 1) are stored and the forward pass
    applies σ_w/√n_l and σ_b; under standard parameterization the stored weights are
    used as-is.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: Literal["mlp"] = "mlp"
    config: MlpConfig
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    # -------------------------------------------------------------------------------------
    # Parameterization
    # -------------------------------------------------------------------------------------

    def weight_scale(self, layer: int) -> float:
        if self.config.parameterization == "ntk":
            return self.config.sigma_w / math.sqrt(self.config.widths[layer])
        return 1.0

    def bias_scale(self) -> float:
        if not self.config.use_bias:
            return 0.0
        return self.config.sigma_b if self.config.parameterization == "ntk" else 1.0

    @property
    def n_params(self) -> int:
        count = sum(w.size for w in self.weights)
        if self.config.use_bias:
            count += sum(b.size for b in self.biases)
        return count

    def flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            if self.config.use_bias:
                parts.append(b.ravel())
        return np.concatenate(parts)

    def with_flat_params(self, theta) -> "MlpModel":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise InvalidArgumentError(f"expected {self.n_params} parameters, got {theta.shape}")
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[offset : offset + w.size].reshape(w.shape))
            offset += w.size
            if self.config.use_bias:
                biases.append(theta[offset : offset + b.size].copy())
                offset += b.size
            else:
                biases.append(np.zeros_like(b))
        return self.model_copy(update={"weights": tuple(weights), "biases": tuple(biases)})

    # -------------------------------------------------------------------------------------
    # Passes
    # -------------------------------------------------------------------------------------

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.widths[0]:
            raise InvalidArgumentError(
                f"input must have shape (N, {self.config.widths[0]}), got {x.shape}"
            )
        return x

    def _forward(self, x: np.ndarray):
        pre, acts = [], [x]
        a = x
        last = len(self.weights) - 1
        bs = self.bias_scale()
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = self.weight_scale(layer) * (a @ w) + bs * b
            pre.append(h)
            a = h if layer == last else _activate(self.config.activation, h)
            acts.append(a)
        return pre, acts

    def _deltas(self, pre: List[np.ndarray]) -> List[np.ndarray]:
        """δ^l = ∂f/∂h^l for every layer, one row per example."""
        n = pre[0].shape[0]
        deltas = [None] * len(pre)
        deltas[-1] = np.ones((n, 1))
        for layer in range(len(pre) - 1, 0, -1):
            back = deltas[layer] @ (self.weight_scale(layer) * self.weights[layer]).T
            deltas[layer - 1] = back * _activate_grad(self.config.activation, pre[layer - 1])
        return deltas

    def predict(self, x) -> np.ndarray:
        _, acts = self._forward(self._check_input(x))
        out = acts[-1][:, 0]
        if not np.all(np.isfinite(out)):
            raise NumericOverflowError("forward pass produced non-finite predictions")
        return out

    # -------------------------------------------------------------------------------------
    # Interface shared with tree ensembles
    # -------------------------------------------------------------------------------------

    @property
    def kernel_step(self) -> float:
        return kernel_step(self.config)

    def kernel(self, x) -> KernelMatrix:
        return empirical_ntk(self, x)

    def training_session(self, x, y, x_val=None, step: Optional[float] = None) -> "MlpSession":
        return MlpSession(self, x, y, x_val=x_val, step=step)

    def to_checkpoint(self) -> MlpCheckpoint:
        return MlpCheckpoint(
            config=self.config,
            weights=[w.tolist() for w in self.weights],
            biases=[b.tolist() for b in self.biases],
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: MlpCheckpoint) -> "MlpModel":
        if checkpoint.version != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"Unsupported MLP checkpoint version {checkpoint.version}")
        return cls(
            config=checkpoint.config,
            weights=tuple(np.asarray(w, dtype=np.float64) for w in checkpoint.weights),
            biases=tuple(np.asarray(b, dtype=np.float64) for b in checkpoint.biases),
        )


def init(config: MlpConfig, rng: RngStream) -> MlpModel:
    """Draw initial parameters; biases are exactly zero when σ_b = 0 or biases are off."""
    gen = rng.generator()
    widths = config.widths
    weights, biases = [], []
    zero_bias = config.sigma_b == 0.0 or not config.use_bias
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = gen.standard_normal((fan_in, fan_out))
        b = gen.standard_normal(fan_out)
        if config.parameterization == "standard":
            w = w * (config.sigma_w / math.sqrt(fan_in))
            b = b * config.sigma_b
        if zero_bias:
            b = np.zeros(fan_out)
        weights.append(w)
        biases.append(b)
    return MlpModel(config=config, weights=tuple(weights), biases=tuple(biases))


def forward(model: MlpModel, x) -> np.ndarray:
    return model.predict(x)


def grad_step(model: MlpModel, x, y, step: float) -> MlpModel:
    """One full-batch iteration θ ← θ − (step/N)·∇f(θ)ᵀ(f(X) − Y)."""
    if step <= 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    x = model._check_input(x)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x.shape[0]

    pre, acts = model._forward(x)
    residual = acts[-1][:, 0] - y
    deltas = model._deltas(pre)
    bs = model.bias_scale()

    new_w, new_b = [], []
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        weighted = deltas[layer] * residual[:, None]
        grad_w = model.weight_scale(layer) * (acts[layer].T @ weighted) / n
        new_w.append(w - step * grad_w)
        if model.config.use_bias:
            new_b.append(b - step * bs * weighted.sum(axis=0) / n)
        else:
            new_b.append(b)

    if not all(np.all(np.isfinite(w)) for w in new_w) or not all(
        np.all(np.isfinite(b)) for b in new_b
    ):
        raise NumericOverflowError("gradient step produced non-finite parameters; lower eta0")
    return model.model_copy(update={"weights": tuple(new_w), "biases": tuple(new_b)})


def per_example_jacobian(model: MlpModel, x) -> np.ndarray:
    """N × |θ| matrix whose row i is ∇_θ f(θ, x_i), parameter order as ``flat_params``."""
    x = model._check_input(x)
    n = x.shape[0]
    if n == 0:
        raise InvalidArgumentError("per_example_jacobian needs at least one row")
    if n * model.n_params > JACOBIAN_ENTRY_CAP:
        raise BudgetError(
            f"Jacobian of {n} x {model.n_params} exceeds {JACOBIAN_ENTRY_CAP} entries"
        )

    pre, acts = model._forward(x)
    deltas = model._deltas(pre)
    bs = model.bias_scale()
    blocks = []
    for layer in range(len(model.weights)):
        outer = np.einsum("ni,nj->nij", acts[layer], deltas[layer])
        blocks.append(model.weight_scale(layer) * outer.reshape(n, -1))
        if model.config.use_bias:
            blocks.append(bs * deltas[layer])
    return np.concatenate(blocks, axis=1)


def empirical_ntk(model: MlpModel, x) -> KernelMatrix:
    """K(i, j) = ⟨∇f(x_i), ∇f(x_j)⟩/N, further divided by m under standard parameterization.

    Per layer the gradient is an outer product a ⊗ δ, so the Gram matrix is
    (A Aᵀ) ⊙ (Δ Δᵀ) summed over layers; the Jacobian itself is never formed.
    """
    x = model._check_input(x)
    n = x.shape[0]
    if n == 0:
        raise InvalidArgumentError("empirical_ntk needs at least one row")

    pre, acts = model._forward(x)
    deltas = model._deltas(pre)
    bs = model.bias_scale()
    gram = np.zeros((n, n))
    for layer in range(len(model.weights)):
        delta_gram = deltas[layer] @ deltas[layer].T
        gram += model.weight_scale(layer) ** 2 * (acts[layer] @ acts[layer].T) * delta_gram
        if model.config.use_bias:
            gram += bs**2 * delta_gram

    gram /= n
    if model.config.parameterization == "standard":
        gram /= model.config.width
    return KernelMatrix(gram)


class MlpSession:
    """Incremental full-batch training with cached predictions on train and validation rows.

    ``step`` is given in kernel units (the η of f ← f − ηK(f − Y)); under standard
    parameterization the parameter step is η/m.
    """

    def __init__(self, model: MlpModel, x, y, x_val=None, step: Optional[float] = None):
        self.model = model
        self.x = model._check_input(x)
        self.y = np.asarray(y, dtype=np.float64).ravel()
        self.x_val = None if x_val is None else model._check_input(x_val)
        if step is None:
            self.step_size = effective_step(model.config)
        elif model.config.parameterization == "standard":
            self.step_size = step / model.config.width
        else:
            self.step_size = step
        self._train_pred = None
        self._val_pred = None

    @property
    def train_pred(self) -> np.ndarray:
        if self._train_pred is None:
            self._train_pred = self.model.predict(self.x)
        return self._train_pred

    @property
    def val_pred(self) -> Optional[np.ndarray]:
        if self.x_val is None:
            return None
        if self._val_pred is None:
            self._val_pred = self.model.predict(self.x_val)
        return self._val_pred

    def step(self, rng: Optional[RngStream] = None) -> None:
        self.model = grad_step(self.model, self.x, self.y, self.step_size)
        self._train_pred = None
        self._val_pred = None

    def snapshot(self) -> MlpModel:
        return self.model
