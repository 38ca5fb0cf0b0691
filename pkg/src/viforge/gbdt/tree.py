import logging
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from viforge.gbdt.config import GbdtConfig
from viforge.gbdt.quantizer import Quantizer, Split
from viforge.numerics.rng import RngStream

logger = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny
_ONE_BELOW = np.nextafter(1.0, 0.0)


class ObliviousTree(BaseModel):
    """Symmetric tree: level i applies ``splits[i]`` to every node.

    A sample goes right at split (j, k) when its bin on feature j exceeds k. The leaf
    index reads the split outcomes as bits, first split most significant.
    """

    model_config = ConfigDict(frozen=True)

    splits: Tuple[Split, ...] = ()
    leaf_values: Tuple[float, ...] = (0.0,)

    @model_validator(mode="after")
    def _check(self):
        if len(set(self.splits)) != len(self.splits):
            raise ValueError("splits must be distinct")
        if len(self.leaf_values) != 2 ** len(self.splits):
            raise ValueError(
                f"{len(self.splits)} splits need {2 ** len(self.splits)} leaf values, "
                f"got {len(self.leaf_values)}"
            )
        return self

    @property
    def depth(self) -> int:
        return len(self.splits)

    def predict_binned(self, binned: np.ndarray) -> np.ndarray:
        return np.asarray(self.leaf_values)[leaf_index(self.splits, binned)]


def leaf_index(splits: Sequence[Split], binned: np.ndarray) -> np.ndarray:
    index = np.zeros(binned.shape[0], dtype=np.intp)
    for j, k in splits:
        index = 2 * index + (binned[:, j] > k)
    return index


def _leaf_sums(splits: Sequence[Split], z: np.ndarray, binned: np.ndarray):
    leaves = leaf_index(splits, binned)
    n_leaves = 2 ** len(splits)
    sums = np.bincount(leaves, weights=z, minlength=n_leaves)
    counts = np.bincount(leaves, minlength=n_leaves)
    return leaves, sums, counts


def _ratio_sum(sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # empty leaves contribute 0
    safe = np.maximum(counts, 1)
    return np.where(counts > 0, sums * sums / safe, 0.0)


def score(splits: Sequence[Split], z, binned: np.ndarray) -> float:
    """D(ν, z) = (1/N) Σ_leaves (Σ_{i in leaf} z_i)² / |leaf|."""
    z = np.asarray(z, dtype=np.float64)
    _, sums, counts = _leaf_sums(splits, z, binned)
    return float(_ratio_sum(sums, counts).sum() / z.shape[0])


def fit_leaf_values(splits: Sequence[Split], z, binned: np.ndarray) -> np.ndarray:
    """Mean residual per leaf; empty leaves get 0."""
    z = np.asarray(z, dtype=np.float64)
    _, sums, counts = _leaf_sums(splits, z, binned)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def tree_kernel(splits: Sequence[Split], binned: np.ndarray) -> np.ndarray:
    """k_ν(x_i, x_j) = N / max(N_leaf, 1) when i and j share a leaf, else 0."""
    n = binned.shape[0]
    leaves = leaf_index(splits, binned)
    counts = np.bincount(leaves, minlength=2 ** len(splits))
    weights = n / np.maximum(counts, 1)
    same = leaves[:, None] == leaves[None, :]
    return np.where(same, weights[leaves][:, None], 0.0)


def level_scores(
    leaves: np.ndarray, n_leaves: int, z: np.ndarray, binned: np.ndarray, quantizer: Quantizer
) -> np.ndarray:
    """Score of appending each candidate split to the current tree, in candidate order.

    One histogram per feature over (leaf, bin) gives every border's left and right
    sums by cumulative summation.
    """
    n = z.shape[0]
    out: List[np.ndarray] = []
    for j, borders in enumerate(quantizer.borders):
        n_bins = len(borders) + 1
        if n_bins == 1:
            continue
        cell = leaves * n_bins + binned[:, j]
        sums = np.bincount(cell, weights=z, minlength=n_leaves * n_bins).reshape(n_leaves, n_bins)
        counts = np.bincount(cell, minlength=n_leaves * n_bins).reshape(n_leaves, n_bins)

        left_s = np.cumsum(sums, axis=1)[:, :-1]
        left_c = np.cumsum(counts, axis=1)[:, :-1]
        right_s = sums.sum(axis=1, keepdims=True) - left_s
        right_c = counts.sum(axis=1, keepdims=True) - left_c
        out.append((_ratio_sum(left_s, left_c) + _ratio_sum(right_s, right_c)).sum(axis=0) / n)
    if not out:
        return np.zeros(0)
    return np.concatenate(out)


def gumbel_noise(gen: np.random.Generator, size: int) -> np.ndarray:
    """−log(−log u) with u kept inside (0, 1)."""
    u = np.clip(gen.random(size), _TINY, _ONE_BELOW)
    return -np.log(-np.log(u))


def sample_tree(
    z, cfg: GbdtConfig, quantizer: Quantizer, binned: np.ndarray, rng: RngStream
) -> Tuple[Split, ...]:
    """Grow an oblivious tree structure greedily on noisy scores.

    At every level each remaining candidate gets D(ν + s, z) + β·Gumbel with fresh
    noise; the best one is appended and removed. With β = 0 this is the plain greedy
    tree and ties go to the lexicographically smallest (feature, border).
    """
    z = np.asarray(z, dtype=np.float64)
    candidates = quantizer.candidate_splits()
    available = np.ones(len(candidates), dtype=bool)
    leaves = np.zeros(z.shape[0], dtype=np.intp)
    gen = rng.generator()

    chosen: List[Split] = []
    for level in range(min(cfg.depth, len(candidates))):
        scores = level_scores(leaves, 2**level, z, binned, quantizer)
        if cfg.beta > 0:
            scores = scores + cfg.beta * gumbel_noise(gen, len(candidates))
        scores[~available] = -np.inf
        best = int(np.argmax(scores))
        available[best] = False
        j, k = candidates[best]
        chosen.append((j, k))
        leaves = 2 * leaves + (binned[:, j] > k)
    return tuple(chosen)
