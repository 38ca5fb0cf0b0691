from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from viforge.errors import InvalidArgumentError

Split = Tuple[int, int]


class Quantizer(BaseModel):
    """Per-feature bin borders; bin(x) counts the borders strictly below x.

    A value equal to a border therefore lands in the bin to its left.
    """

    model_config = ConfigDict(frozen=True)

    borders: Tuple[Tuple[float, ...], ...]

    @field_validator("borders")
    @classmethod
    def _check_increasing(cls, borders):
        for j, b in enumerate(borders):
            if any(lo >= hi for lo, hi in zip(b, b[1:])):
                raise ValueError(f"borders of feature {j} are not strictly increasing")
        return borders

    @property
    def n_features(self) -> int:
        return len(self.borders)

    def transform(self, x) -> np.ndarray:
        """Bin every column; returns an integer matrix of the same shape."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"expected {self.n_features} feature columns, got shape {x.shape}"
            )
        binned = np.empty(x.shape, dtype=np.intp)
        for j, b in enumerate(self.borders):
            binned[:, j] = np.searchsorted(np.asarray(b), x[:, j], side="left")
        return binned

    def candidate_splits(self) -> List[Split]:
        """All (feature, border) pairs in lexicographic order."""
        return [(j, k) for j, b in enumerate(self.borders) for k in range(len(b))]


def quantize(x, n: int) -> Quantizer:
    """Borders at the empirical quantiles k/(n+1), k = 1..n, deduplicated.

    Borders that cannot separate the data (at or above the column maximum) are dropped,
    so a constant column has none.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be at least 1, got {n}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgumentError(f"x must be 2-D, got shape {x.shape}")

    levels = np.arange(1, n + 1) / (n + 1)
    borders = []
    for column in x.T:
        if column.size == 0:
            borders.append(())
            continue
        qs = np.unique(np.quantile(column, levels))
        qs = qs[(qs >= column.min()) & (qs < column.max())]
        borders.append(tuple(float(q) for q in qs))
    return Quantizer(borders=tuple(borders))
