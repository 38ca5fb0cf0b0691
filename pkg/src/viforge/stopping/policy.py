from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class PatiencePolicy(BaseModel):
    """Stop after ``patience`` epochs without validation improvement."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["patience"] = "patience"
    patience: int = Field(default=10, ge=1)
    q_val: float = Field(default=0.75, gt=0.0, lt=1.0)
    max_epochs: int = Field(default=2000, ge=0)
    min_delta: float = Field(default=1e-10, ge=0.0)


class FixedTPolicy(BaseModel):
    """Run exactly ``n_iters`` iterations on the whole training set."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["fixed_T"] = "fixed_T"
    n_iters: int = Field(ge=0)
    step: Optional[float] = Field(default=None, gt=0.0)


class TMaxPolicy(BaseModel):
    """Run T̂_max iterations, computed from the warm-start kernel spectrum."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["t_max_rule"] = "t_max_rule"
    sigma: float = Field(gt=0.0)
    c_h: float = Field(ge=0.0)
    step: Optional[float] = Field(default=None, gt=0.0)


StopPolicy = Annotated[
    Union[PatiencePolicy, FixedTPolicy, TMaxPolicy],
    Field(discriminator="kind"),
]
