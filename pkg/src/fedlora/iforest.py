"""Isolation forest built from scratch.

Trees recursively partition seeded subsamples on a uniformly random
feature at a uniformly random cut between that node's min and max.
Points that isolate in few splits get anomaly scores near 1; deep,
well-embedded points score low. Scores follow s(x) = 2^(-E[h(x)]/c(psi))
with the usual average-path-length normalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame import FeatureFrame

_EULER_GAMMA = 0.5772156649


def average_path_length(n: int) -> float:
    """Expected unsuccessful-search path length in a binary tree of n points."""
    if n <= 1:
        return 0.0
    return 2.0 * (np.log(n - 1.0) + _EULER_GAMMA) - 2.0 * (n - 1.0) / n


@dataclass
class _Node:
    size: int
    feature: int = -1
    value: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class IForest:
    """Fitted forest plus the training-score distribution for thresholding."""

    trees: list[_Node]
    subsample_size: int
    training_scores: np.ndarray
    contamination: float | None = None
    score_threshold: float | None = None


def _grow(x: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> _Node:
    n = x.shape[0]
    if n <= 1 or depth >= limit:
        return _Node(size=n)
    lows = x.min(axis=0)
    highs = x.max(axis=0)
    splittable = np.flatnonzero(highs > lows)
    if splittable.size == 0:  # duplicates: nothing left to isolate
        return _Node(size=n)
    q = int(rng.choice(splittable))
    p = float(rng.uniform(lows[q], highs[q]))
    mask = x[:, q] < p
    return _Node(
        size=n,
        feature=q,
        value=p,
        left=_grow(x[mask], depth + 1, limit, rng),
        right=_grow(x[~mask], depth + 1, limit, rng),
    )


def _path_lengths(tree: _Node, x: np.ndarray) -> np.ndarray:
    """Vectorized descent: path length (plus leaf adjustment) per row."""
    out = np.empty(x.shape[0])
    stack = [(tree, np.arange(x.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if node.is_leaf:
            out[rows] = depth + average_path_length(node.size)
            continue
        mask = x[rows, node.feature] < node.value
        left_rows = rows[mask]
        right_rows = rows[~mask]
        if left_rows.size:
            stack.append((node.left, left_rows, depth + 1))
        if right_rows.size:
            stack.append((node.right, right_rows, depth + 1))
    return out


def _values(frame) -> np.ndarray:
    return frame.values if isinstance(frame, FeatureFrame) else np.asarray(frame, dtype=np.float64)


def fit_iforest(frame, n_trees: int = 100, max_samples: float = 0.27, seed: int = 0) -> IForest:
    """Fit n_trees isolation trees on subsamples of size round(max_samples * n)."""
    x = _values(frame)
    n = x.shape[0]
    if n < 8:
        raise ValueError("need at least 8 instances to fit an isolation forest")
    if np.all(x == x[0]):
        raise ValueError("degenerate data: all rows identical")
    if not 0.0 < max_samples <= 1.0:
        raise ValueError("max_samples fraction must lie in (0, 1]")

    psi = min(n, max(2, round(max_samples * n)))
    limit = int(np.ceil(np.log2(psi)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        idx = rng.choice(n, size=psi, replace=False)
        trees.append(_grow(x[idx], 0, limit, rng))

    forest = IForest(trees=trees, subsample_size=psi, training_scores=np.empty(0))
    forest.training_scores = iforest_scores(forest, x)
    return forest


def iforest_scores(forest: IForest, frame) -> np.ndarray:
    """Anomaly scores in (0, 1); higher means easier to isolate."""
    if not forest.trees:
        raise ValueError("forest has no trees")
    x = _values(frame)
    total = np.zeros(x.shape[0])
    for tree in forest.trees:
        total += _path_lengths(tree, x)
    mean_depth = total / len(forest.trees)
    return 2.0 ** (-mean_depth / average_path_length(forest.subsample_size))


def iforest_classify(forest: IForest, frame, contamination: float = 0.07) -> np.ndarray:
    """Flag scores at or above the (1 - contamination) quantile of training scores."""
    if not 0.0 < contamination <= 0.5:
        raise ValueError("contamination must lie in (0, 0.5]")
    threshold = float(np.quantile(forest.training_scores, 1.0 - contamination))
    forest.contamination = contamination
    forest.score_threshold = threshold
    return iforest_scores(forest, frame) >= threshold
