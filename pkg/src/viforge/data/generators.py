"""Synthetic data for the simulation studies.

Every generator takes an :class:`RngStream` and draws features and noise from
separate sub-streams, so changing the noise level never changes X.
"""

import logging
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import expit

from viforge.data.dataset import Dataset
from viforge.errors import InvalidArgumentError
from viforge.numerics.linalg import mvn_sample
from viforge.numerics.rng import RngStream

logger = logging.getLogger(__name__)

HIGHDIM_LEADING_BETA = (5.0, 4.0, 3.0, 2.0, 1.0)
GAS_TURBINE_COLUMNS = ("AT", "AP", "AH", "AFDP", "GTEP", "TIT", "TAT", "TEY", "CDP")


def _pair_correlated_cov(p: int, rho: float, scale: float = 1.0) -> np.ndarray:
    cov = np.eye(p) * scale**2
    if p >= 2:
        cov[0, 1] = cov[1, 0] = rho * scale**2
    return cov


def correlated_linear_vi(beta_1: float, rho: float, sigma_x: float) -> float:
    """VI of the first feature: β₁²(1−ρ²)σ_x²."""
    return beta_1**2 * (1.0 - rho**2) * sigma_x**2


def gen_correlated_linear(
    rho: float,
    beta: Sequence[float],
    sigma_x: float,
    sigma_eps: float,
    n: int,
    rng: RngStream,
) -> Tuple[Dataset, float]:
    """X₁, X₂ correlated at ``rho``, other features independent N(0, σ_x²); Y = Xβ + ε."""
    if abs(rho) > 1.0:
        raise InvalidArgumentError(f"rho must lie in [-1, 1], got {rho}")
    if sigma_x <= 0 or sigma_eps < 0:
        raise InvalidArgumentError("sigma_x must be positive and sigma_eps non-negative")
    coef = np.asarray(beta, dtype=np.float64)
    p = coef.shape[0]

    x = mvn_sample(np.zeros(p), _pair_correlated_cov(p, rho, sigma_x), n, rng.child("data"))
    noise = rng.child("noise").generator().standard_normal(n)
    y = x @ coef + sigma_eps * noise
    return Dataset(x=x, y=y), correlated_linear_vi(float(coef[0]), rho, sigma_x)


def highdim_beta(p: int) -> np.ndarray:
    beta = np.zeros(p)
    beta[: len(HIGHDIM_LEADING_BETA)] = HIGHDIM_LEADING_BETA
    return beta


def gen_highdim(
    kind: Literal["nn-teacher", "linear"],
    p: int,
    n: int,
    rng: RngStream,
    noise_sigma: float = 1.0,
    teacher_width: int = 64,
    teacher_sigma: float = 0.1,
) -> Dataset:
    """High-dimensional regression with Corr(X₁, X₂) = 0.5 and β = (5,4,3,2,1,0,…).

    The ``nn-teacher`` response is V·ReLU(W X)/√m with W[:, j] ~ N(β_j, teacher_sigma²)
    and V ~ N(0, 1); the 1/√m factor keeps the response scale independent of m. A small
    ``teacher_sigma`` keeps the trailing zero-β features close to irrelevant.
    """
    if p < 6:
        raise InvalidArgumentError(f"gen_highdim needs p >= 6, got {p}")
    beta = highdim_beta(p)
    x = mvn_sample(np.zeros(p), _pair_correlated_cov(p, 0.5), n, rng.child("data"))
    noise = noise_sigma * rng.child("noise").generator().standard_normal(n)

    if kind == "linear":
        y = x @ beta + noise
    elif kind == "nn-teacher":
        gen = rng.child("init").generator()
        w = beta[None, :] + teacher_sigma * gen.standard_normal((teacher_width, p))
        v = gen.standard_normal(teacher_width)
        y = np.maximum(x @ w.T, 0.0) @ v / np.sqrt(teacher_width) + noise
    else:
        raise InvalidArgumentError(f"Unknown high-dimensional kind '{kind}'")
    return Dataset(x=x, y=y)


def logistic_beta(p: int) -> np.ndarray:
    return 10.0 * np.arange(p, dtype=np.float64)


def gen_logistic(p: int, n: int, rng: RngStream, beta: Optional[Sequence[float]] = None) -> Dataset:
    """Binary y ~ Bernoulli(logistic(Xβ)) stored as 0/1, β = 10·(0, 1, …, p−1) by default."""
    coef = logistic_beta(p) if beta is None else np.asarray(beta, dtype=np.float64)
    if coef.shape[0] != p:
        raise InvalidArgumentError(f"beta has length {coef.shape[0]}, expected {p}")
    x = mvn_sample(np.zeros(p), _pair_correlated_cov(p, 0.5), n, rng.child("data"))
    prob = expit(x @ coef)
    y = (rng.child("noise").generator().random(n) < prob).astype(np.float64)
    return Dataset(x=x, y=y)


class AdditiveTeacher(BaseModel):
    """f₀(x) = f(x₋₁) + β₁·x₁ with independent features, so f₀,₋₁(x) = f(x₋₁) + β₁·E[X₁].

    ``kind="gbdt"`` draws feature i (1-based) uniformly from {i−1, i, i+1} and uses an
    additive step function f; ``kind="mlp"`` draws standard normal features and uses a
    random one-hidden-layer ReLU network for f.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["gbdt", "mlp"]
    p: int
    beta_1: float
    noise_sigma: float
    tables: Optional[np.ndarray] = None
    hidden_w: Optional[np.ndarray] = None
    hidden_b: Optional[np.ndarray] = None
    out_v: Optional[np.ndarray] = None

    @classmethod
    def build(
        cls,
        kind: Literal["gbdt", "mlp"],
        rng: RngStream,
        p: int = 3,
        beta_1: float = 3.0,
        noise_sigma: float = 1.0,
        hidden: int = 16,
    ) -> "AdditiveTeacher":
        if p < 2:
            raise InvalidArgumentError("AdditiveTeacher needs at least two features")
        gen = rng.child("init").generator()
        if kind == "gbdt":
            return cls(kind=kind, p=p, beta_1=beta_1, noise_sigma=noise_sigma,
                       tables=gen.standard_normal((p - 1, 3)))
        if kind == "mlp":
            return cls(
                kind=kind, p=p, beta_1=beta_1, noise_sigma=noise_sigma,
                hidden_w=gen.standard_normal((p - 1, hidden)),
                hidden_b=0.1 * gen.standard_normal(hidden),
                out_v=gen.standard_normal(hidden) / np.sqrt(hidden),
            )
        raise InvalidArgumentError(f"Unknown teacher kind '{kind}'")

    @property
    def mean_x1(self) -> float:
        return 1.0 if self.kind == "gbdt" else 0.0

    @property
    def reduced_noise_sigma(self) -> float:
        """Noise level once X₁ is dropped: β₁(X₁ − E[X₁]) joins ε."""
        var_x1 = 2.0 / 3.0 if self.kind == "gbdt" else 1.0
        return float(np.sqrt(self.beta_1**2 * var_x1 + self.noise_sigma**2))

    def _features(self, n: int, rng: RngStream) -> np.ndarray:
        gen = rng.child("data").generator()
        if self.kind == "gbdt":
            offsets = gen.integers(-1, 2, size=(n, self.p))
            return offsets + np.arange(1, self.p + 1)[None, :].astype(np.float64)
        return gen.standard_normal((n, self.p))

    def reduced(self, x: np.ndarray) -> np.ndarray:
        """f(x₋₁), the part of f₀ that survives dropping the first feature."""
        rest = x[:, 1:]
        if self.kind == "gbdt":
            # Feature i+2 (1-based) takes values {i+1, i+2, i+3}; map to table columns 0..2
            levels = np.clip(np.rint(rest - np.arange(2, self.p + 1)[None, :] + 1), 0, 2).astype(int)
            return self.tables[np.arange(self.p - 1)[None, :], levels].sum(axis=1)
        return np.maximum(rest @ self.hidden_w + self.hidden_b, 0.0) @ self.out_v

    def sample(self, n: int, rng: RngStream) -> Tuple[Dataset, np.ndarray]:
        """Draw a dataset and the reduced truth f₀,₋₁ evaluated on its rows."""
        x = self._features(n, rng)
        f_rest = self.reduced(x)
        noise = self.noise_sigma * rng.child("noise").generator().standard_normal(n)
        y = f_rest + self.beta_1 * x[:, 0] + noise
        return Dataset(x=x, y=y), f_rest + self.beta_1 * self.mean_x1


def gen_gas_turbine_like(n: int, rng: RngStream) -> Dataset:
    """Synthetic rows with the gas-turbine sensor schema and a NOX target.

    Temperature-type sensors are strongly correlated; ambient humidity and pressure
    carry little signal, TIT carries the most.
    """
    p = len(GAS_TURBINE_COLUMNS)
    cov = np.eye(p)
    hot = [GAS_TURBINE_COLUMNS.index(c) for c in ("GTEP", "TIT", "TAT", "TEY", "CDP")]
    for a in hot:
        for b in hot:
            if a != b:
                cov[a, b] = 0.7
    z = mvn_sample(np.zeros(p), cov, n, rng.child("data"))

    centers = np.array([17.7, 1013.0, 77.9, 3.9, 25.6, 1081.0, 546.0, 133.5, 12.1])
    scales = np.array([7.4, 6.4, 14.5, 0.77, 4.2, 17.5, 6.8, 15.6, 1.1])
    x = centers + scales * z

    col = {name: z[:, i] for i, name in enumerate(GAS_TURBINE_COLUMNS)}
    noise = rng.child("noise").generator().standard_normal(n)
    nox = (
        65.0
        + 6.0 * col["TIT"]
        - 2.0 * col["TAT"]
        + 1.5 * col["AT"] * col["TIT"]
        - 1.0 * col["GTEP"]
        + 0.3 * col["AH"]
        + 2.0 * noise
    )
    return Dataset(x=x, y=nox, feature_names=GAS_TURBINE_COLUMNS)
