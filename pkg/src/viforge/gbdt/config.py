from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class GbdtConfig(BaseModel):
    """Oblivious-tree boosting settings.

    ``shrink`` is the λ of the update f ← (1 − λε/N)f + ε·tree; the experiment
    defaults follow the desk-scale runs (depth 2, random strength 10000).
    """

    model_config = ConfigDict(frozen=True)

    family: Literal["gbdt"] = "gbdt"
    depth: int = Field(default=2, ge=1)
    n_borders: int = Field(default=32, ge=1)
    beta: float = Field(default=10000.0, ge=0.0)
    epsilon: float = Field(default=0.3, gt=0.0)
    shrink: float = Field(default=0.0, ge=0.0)
    max_iters: int = Field(default=2000, ge=0)
