import math
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from viforge.gbdt.config import GbdtConfig
from viforge.mlp.config import MlpConfig
from viforge.stopping.policy import PatiencePolicy, StopPolicy

ExperimentId = Literal["rate", "corr-linear", "highdim", "shapley-logistic", "wald-coverage", "real-csv"]

EXPERIMENT_IDS = ("rate", "corr-linear", "highdim", "shapley-logistic", "wald-coverage", "real-csv")


class DataConfig(BaseModel):
    n: int = Field(default=5000, ge=2)
    p: int = Field(default=6, ge=1)
    q: float = Field(default=0.75, gt=0.0, lt=1.0)
    rho_grid: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75])
    n_grid: List[int] = Field(default_factory=lambda: [200, 400, 800, 1600])
    beta: List[float] = Field(default_factory=lambda: [1.5, 1.2, 1.0, 0.0, 0.0, 0.0])
    sigma_x: float = Field(default=1.0, gt=0.0)
    sigma_eps: float = Field(default=1.0, ge=0.0)
    kind: Literal["nn-teacher", "linear"] = "nn-teacher"
    teacher_sigma: float = Field(default=0.1, ge=0.0)
    beta_1: float = 3.0
    n_eval: int = Field(default=5000, ge=1)
    csv_path: Optional[str] = None
    target_column: str = "NOX"

    @field_validator("rho_grid", "n_grid")
    @classmethod
    def _nonempty(cls, grid):
        if not grid:
            raise ValueError("grids must be nonempty")
        return grid

    @field_validator("rho_grid")
    @classmethod
    def _rho_range(cls, grid):
        if any(abs(r) > 1.0 for r in grid):
            raise ValueError("correlations must lie in [-1, 1]")
        return grid


class ExperimentConfig(BaseModel):
    """Everything one experiment run needs; replicate r uses seed ``seed + r``."""

    experiment: ExperimentId = "corr-linear"
    model: Literal["mlp", "gbdt"] = "mlp"
    seed: int = Field(default=0, ge=0)
    replicates: int = Field(default=10, ge=1)
    out_dir: str = "results"
    n_jobs: int = 1
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    shapley_samples: int = Field(default=50, ge=1)
    mlp: MlpConfig = Field(default_factory=MlpConfig)
    gbdt: GbdtConfig = Field(default_factory=GbdtConfig)
    stop: StopPolicy = Field(default_factory=PatiencePolicy)
    data: DataConfig = Field(default_factory=DataConfig)

    def estimator_config(self) -> Union[MlpConfig, GbdtConfig]:
        return self.mlp if self.model == "mlp" else self.gbdt


class RunRecord(BaseModel):
    experiment: str
    seed: int
    replicate: int
    params: Dict[str, Union[int, float, str]] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)
    wall_ms: float = 0.0

    @field_validator("metrics")
    @classmethod
    def _finite(cls, metrics):
        bad = [k for k, v in metrics.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite metrics: {bad}")
        return metrics
