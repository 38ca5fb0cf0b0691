import math
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator


class MlpConfig(BaseModel):
    """Fully-connected network n₀ → … → n_{L+1} = 1.

    ``widths`` lists every layer width including input and the scalar output, so
    ``[2, 1]`` is a single linear layer and ``[p, 256, 1]`` has one hidden layer.
    """

    model_config = ConfigDict(frozen=True)

    family: Literal["mlp"] = "mlp"
    widths: List[int] = Field(default_factory=lambda: [1, 256, 1])
    activation: Literal["relu", "softplus"] = "relu"
    parameterization: Literal["ntk", "standard"] = "ntk"
    sigma_w: float = Field(default=math.sqrt(2.0), gt=0.0)
    sigma_b: float = Field(default=0.1, ge=0.0)
    eta0: float = Field(default=0.5, gt=0.0)
    use_bias: bool = True

    @field_validator("widths")
    @classmethod
    def _check_widths(cls, widths: List[int]) -> List[int]:
        if len(widths) < 2:
            raise ValueError("widths needs at least input and output entries")
        if any(w < 1 for w in widths):
            raise ValueError("all widths must be positive")
        if widths[-1] != 1:
            raise ValueError("the output layer must have width 1")
        return widths

    @property
    def n_hidden_layers(self) -> int:
        return len(self.widths) - 2

    @property
    def width(self) -> int:
        """Width m used for standard-parameterization scaling (fan-in of the output layer)."""
        return self.widths[-2]

    def with_input_dim(self, p: int) -> "MlpConfig":
        return self.model_copy(update={"widths": [p] + list(self.widths[1:])})


def effective_step(config: MlpConfig) -> float:
    """Gradient-descent step: η₀ under NTK parameterization, η₀/m under standard."""
    if config.parameterization == "standard":
        return config.eta0 / config.width
    return config.eta0


def kernel_step(config: MlpConfig) -> float:
    """Step of the iterative kernel update f ← f − η₀K(f − Y) in both parameterizations."""
    return config.eta0
