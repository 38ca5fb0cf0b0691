import itertools
import logging
import math
from collections import defaultdict
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from viforge.errors import BudgetError, InvalidArgumentError
from viforge.gbdt.config import GbdtConfig
from viforge.gbdt.quantizer import Quantizer, Split, quantize
from viforge.gbdt.tree import leaf_index, level_scores
from viforge.stopping.kernel import KernelMatrix

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 200_000

TreeKey = Tuple[Split, ...]


def _depth(cfg: GbdtConfig, quantizer: Quantizer) -> int:
    return min(cfg.depth, len(quantizer.candidate_splits()))


def stationary_kernel(x, cfg: GbdtConfig, quantizer: Optional[Quantizer] = None) -> KernelMatrix:
    """K = (1/N) E_ν k_ν with ν uniform over unordered sets of min(d, |S|) candidate splits.

    Split order does not change the leaf partition, so each set is one tree. The
    trace equals the average number of non-empty leaves, hence never exceeds 2^d.
    """
    x = np.asarray(x, dtype=np.float64)
    if quantizer is None:
        quantizer = quantize(x, cfg.n_borders)
    binned = quantizer.transform(x)
    n = binned.shape[0]
    candidates = quantizer.candidate_splits()
    depth = _depth(cfg, quantizer)

    n_trees = math.comb(len(candidates), depth)
    if n_trees > ENUMERATION_CAP:
        raise BudgetError(
            f"stationary kernel needs {n_trees} trees (cap {ENUMERATION_CAP}); "
            f"reduce depth or borders"
        )
    logger.debug(f"Averaging {n_trees} tree kernels over {n} samples")

    total = np.zeros((n, n))
    for splits in itertools.combinations(candidates, depth):
        leaves = leaf_index(splits, binned)
        counts = np.bincount(leaves, minlength=2**depth)
        weights = 1.0 / np.maximum(counts, 1)
        total += np.where(leaves[:, None] == leaves[None, :], weights[leaves][:, None], 0.0)
    # (1/N)·k_ν has entries 1/N_leaf
    return KernelMatrix(total / n_trees)


def tree_distribution(
    z, cfg: GbdtConfig, quantizer: Quantizer, binned: np.ndarray
) -> Dict[TreeKey, float]:
    """Exact law of :func:`sample_tree` over unordered split sets.

    Sums, over every ordering of each set, the product of per-level softmax(D/β)
    choice probabilities.
    """
    if cfg.beta <= 0:
        raise InvalidArgumentError("tree_distribution needs beta > 0")
    z = np.asarray(z, dtype=np.float64)
    candidates = quantizer.candidate_splits()
    depth = _depth(cfg, quantizer)

    n_paths = math.perm(len(candidates), depth)
    if n_paths > ENUMERATION_CAP:
        raise BudgetError(f"tree distribution needs {n_paths} orderings (cap {ENUMERATION_CAP})")

    probs: Dict[TreeKey, float] = defaultdict(float)

    def visit(prefix, leaves, available, log_p):
        if len(prefix) == depth:
            probs[tuple(sorted(prefix))] += math.exp(log_p)
            return
        logits = level_scores(leaves, 2 ** len(prefix), z, binned, quantizer) / cfg.beta
        open_idx = np.flatnonzero(available)
        log_norm = logsumexp(logits[open_idx])
        for i in open_idx:
            j, k = candidates[i]
            available[i] = False
            visit(
                prefix + [(j, k)],
                2 * leaves + (binned[:, j] > k),
                available,
                log_p + logits[i] - log_norm,
            )
            available[i] = True

    visit([], np.zeros(z.shape[0], dtype=np.intp), np.ones(len(candidates), dtype=bool), 0.0)
    return dict(probs)
