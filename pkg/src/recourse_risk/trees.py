"""Histogram-based CART growing, shared by the decision tree and the boosted ensemble."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List

import numpy as np


class Binner:
    """Maps each feature onto integer bins delimited by candidate split thresholds.

    A feature value ``v`` goes to bin ``searchsorted(edges, v)``, so the split
    ``v <= edges[m]`` sends exactly bins ``0..m`` left.
    """

    def __init__(self, X: np.ndarray, max_bins: int = 255):
        self.edges: List[np.ndarray] = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if len(u) > max_bins + 1:
                u = np.unique(np.quantile(X[:, j], np.linspace(0.0, 1.0, max_bins + 1)))
            self.edges.append(0.5 * (u[1:] + u[:-1]))

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.int64)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return node
            rows = np.nonzero(internal)[0]
            n = node[rows]
            go_left = X[rows, feat[internal]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


GainFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
LeafFn = Callable[[np.ndarray], float]


def gini_gain(left: np.ndarray, right: np.ndarray, parent: np.ndarray) -> np.ndarray:
    """Weighted Gini decrease; stats columns are (weight, positive weight, count)."""

    def impurity(s):
        w = s[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 2.0 * s[..., 1] * (w - s[..., 1]) / w
        return np.where(w > 0, out, 0.0)

    return impurity(parent) - impurity(left) - impurity(right)


def gini_leaf(s: np.ndarray) -> float:
    return float(s[1] / s[0]) if s[0] > 0 else 0.5


def squared_error_gain(left: np.ndarray, right: np.ndarray, parent: np.ndarray) -> np.ndarray:
    """Variance reduction; stats columns are (residual sum, hessian sum, count)."""

    def score(s):
        n = s[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = s[..., 0] ** 2 / n
        return np.where(n > 0, out, 0.0)

    return score(left) + score(right) - score(parent)


def newton_leaf(s: np.ndarray) -> float:
    return float(s[0] / max(s[1], 1e-12))


def grow_tree(
    bins: np.ndarray,
    binner: Binner,
    stats: np.ndarray,
    gain_fn: GainFn,
    leaf_fn: LeafFn,
    max_depth: int,
    rows: np.ndarray = None,
    min_samples_leaf: int = 1,
    min_gain: float = 1e-12,
) -> Tree:
    """Grow a depth-limited binary tree greedily maximising ``gain_fn``.

    ``stats`` holds per-sample additive statistics whose last column is a
    count of ones; histograms of those columns drive the split search.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if rows is None:
        rows = np.arange(len(bins))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, rows, 0)]
    k = stats.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        parent = stats[idx].sum(axis=0)
        value[node] = leaf_fn(parent)
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf:
            continue
        best = (min_gain, -1, -1)
        for j, edges in enumerate(binner.edges):
            n_edges = len(edges)
            if n_edges == 0:
                continue
            b = bins[idx, j]
            hist = np.stack(
                [np.bincount(b, weights=stats[idx, c], minlength=n_edges + 1) for c in range(k)], axis=1
            )
            cum = np.cumsum(hist, axis=0)[:-1]
            rest = parent[None, :] - cum
            ok = (cum[:, -1] >= min_samples_leaf) & (rest[:, -1] >= min_samples_leaf)
            if not ok.any():
                continue
            gain = np.where(ok, gain_fn(cum, rest, parent[None, :]), -np.inf)
            m = int(np.argmax(gain))
            if gain[m] > best[0]:
                best = (float(gain[m]), j, m)
        _, j, m = best
        if j < 0:
            continue
        go_left = bins[idx, j] <= m
        feature[node] = j
        threshold[node] = float(binner.edges[j][m])
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))

    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
    )
