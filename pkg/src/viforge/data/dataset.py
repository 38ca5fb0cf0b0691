import logging
from typing import Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from viforge.errors import InvalidArgumentError
from viforge.numerics.rng import RngStream

logger = logging.getLogger(__name__)


def _frozen_array(value, ndim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class Dataset(BaseModel):
    """Feature matrix ``x`` (N×p) with response ``y``; immutable once built."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: np.ndarray
    y: np.ndarray
    feature_names: Optional[Tuple[str, ...]] = None

    @field_validator("x", mode="before")
    @classmethod
    def _coerce_x(cls, value):
        return _frozen_array(value, 2, "x")

    @field_validator("y", mode="before")
    @classmethod
    def _coerce_y(cls, value):
        return _frozen_array(np.ravel(value), 1, "y")

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.x.shape[0] < 1:
            raise ValueError("Dataset needs at least one row")
        if self.y.shape[0] != self.x.shape[0]:
            raise ValueError(f"y has {self.y.shape[0]} entries but x has {self.x.shape[0]} rows")
        if self.feature_names is not None and len(self.feature_names) != self.x.shape[1]:
            raise ValueError(f"{len(self.feature_names)} feature names for {self.x.shape[1]} columns")
        return self

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def names(self) -> Tuple[str, ...]:
        if self.feature_names is not None:
            return self.feature_names
        return tuple(f"x{j + 1}" for j in range(self.n_features))

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidArgumentError(f"Unknown feature '{name}'") from None

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(x=self.x[rows], y=self.y[rows], feature_names=self.feature_names)

    def with_x(self, x) -> "Dataset":
        return Dataset(x=x, y=self.y, feature_names=self.feature_names)


class DropSpec(BaseModel):
    """Feature indices to drop and the constant each is replaced with."""

    model_config = ConfigDict(frozen=True)

    indices: Tuple[int, ...] = ()
    replacement: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self):
        if len(self.indices) != len(self.replacement):
            raise ValueError("replacement must have one value per dropped index")
        if any(i < 0 for i in self.indices):
            raise ValueError("indices must be non-negative")
        if any(a >= b for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be sorted and distinct")
        return self

    @classmethod
    def from_means(cls, data: Dataset, indices: Iterable[int]) -> "DropSpec":
        """Replacement values are the column means of ``data`` (the training portion)."""
        idx = tuple(sorted(set(int(i) for i in indices)))
        for i in idx:
            if i >= data.n_features:
                raise InvalidArgumentError(f"feature index {i} out of range for p={data.n_features}")
        means = tuple(float(data.x[:, i].mean()) for i in idx)
        return cls(indices=idx, replacement=means)

    def validate_for(self, data: Dataset) -> None:
        for i in self.indices:
            if i >= data.n_features:
                raise InvalidArgumentError(f"feature index {i} out of range for p={data.n_features}")


class SplitPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: float = Field(gt=0.0, lt=1.0)
    rng: RngStream


def drop_features(data: Dataset, spec: DropSpec) -> Dataset:
    """Replace every column in ``spec.indices`` by its constant; y and other columns are untouched."""
    spec.validate_for(data)
    if not spec.indices:
        return data
    x = np.array(data.x, copy=True)
    for index, value in zip(spec.indices, spec.replacement):
        x[:, index] = value
    return data.with_x(x)


def split_indices(n: int, plan: SplitPlan) -> Tuple[np.ndarray, np.ndarray]:
    """Row ids of the two parts; the first has round(q·n) rows (half rounds up)."""
    if n < 2:
        raise InvalidArgumentError(f"split needs at least 2 rows, got {n}")
    n_first = int(np.floor(plan.q * n + 0.5))
    n_first = min(max(n_first, 1), n - 1)
    perm = plan.rng.generator().permutation(n)
    return np.sort(perm[:n_first]), np.sort(perm[n_first:])


def split(data: Dataset, plan: SplitPlan) -> Tuple[Dataset, Dataset]:
    first, second = split_indices(data.n_samples, plan)
    return data.subset(first), data.subset(second)
