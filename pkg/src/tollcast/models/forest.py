"""Random forest regression: bagged CART trees with per-node feature
sampling and mean aggregation of tree outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass
class Tree:
    """Flat-array binary regression tree; feature < 0 marks a leaf."""

    feature: np.ndarray  # int64
    threshold: np.ndarray  # float64, NaN at leaves
    left: np.ndarray  # int64, -1 at leaves
    right: np.ndarray
    value: np.ndarray  # leaf prediction (training mean)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(
                go_left, self.left[node[rows]], self.right[node[rows]]
            )
        return self.value[node]


def _best_split(X, y, feature_ids, min_leaf):
    """(feature, threshold) minimizing summed child SSE, or None.

    Ties break toward the lowest feature index, then lowest threshold.
    """
    n = len(y)
    best_sse = np.inf
    best = None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        cum = np.cumsum(ys)
        cumsq = np.cumsum(ys * ys)
        k = np.arange(1, n)
        tot, totsq = cum[-1], cumsq[-1]
        left_sse = cumsq[:-1] - cum[:-1] ** 2 / k
        right_sse = (totsq - cumsq[:-1]) - (tot - cum[:-1]) ** 2 / (n - k)
        sse = left_sse + right_sse
        valid = (k >= min_leaf) & (n - k >= min_leaf) & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))  # first minimum: lowest threshold
        if sse[i] < best_sse:
            best_sse = sse[i]
            best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int,
             features_per_split: int, rng: np.random.Generator) -> Tree:
    """Grow one CART regression tree.

    At each node `features_per_split` features are sampled without
    replacement; growth stops at max_depth, insufficient rows, or zero
    target variance. Leaves store the training mean.
    """
    if len(y) == 0:
        raise ValueError("cannot fit a tree on empty input")
    if len(y) < min_leaf:
        raise ValueError(f"need at least min_leaf={min_leaf} rows, got {len(y)}")
    p = X.shape[1]
    m = min(max(1, features_per_split), p)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(float("nan"))
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(rows, depth):
        node = new_node()
        ys = y[rows]
        value[node] = float(ys.mean())
        if depth >= max_depth or len(rows) < 2 * min_leaf or np.ptp(ys) == 0.0:
            return node
        feats = np.sort(rng.choice(p, size=m, replace=False))
        split = _best_split(X[rows], ys, feats, min_leaf)
        if split is None:
            return node
        f, thr = split
        mask = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
    )


class ForestRegressor(BaseEstimator, RegressorMixin):
    """Bootstrap-aggregated regression trees.

    Each tree trains on a same-size bootstrap resample under its own
    sub-seed (prefix-stable in n_trees), so fits are deterministic and
    order-independent. Predictions average the tree outputs and therefore
    stay inside the training target range.

    Parameters
    ----------
    n_trees : number of trees.
    max_depth : maximum tree depth (0 gives a single leaf).
    min_leaf : minimum rows per leaf; splits leaving fewer are rejected.
    features_per_split : features sampled per node; 0 means ceil(p / 3).
    random_state : seed for all resampling and feature sampling.
    """

    def __init__(self, n_trees=200, max_depth=12, min_leaf=5,
                 features_per_split=0, random_state=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.features_per_split = features_per_split
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != X.shape[0]:
            raise ValueError("X and y disagree on row count")
        if len(y) == 0:
            raise ValueError("cannot fit on an empty table")
        p = X.shape[1]
        m = self.features_per_split or math.ceil(p / 3)
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_trees)
        self.trees_ = []
        n = len(y)
        for seq in seeds:
            rng = np.random.default_rng(seq)
            idx = rng.integers(0, n, size=n)
            self.trees_.append(
                fit_tree(X[idx], y[idx], self.max_depth, self.min_leaf, m, rng)
            )
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for tree in self.trees_:
            out += tree.predict(X)
        return out / len(self.trees_)


def to_payload(est: ForestRegressor):
    """Flatten the fitted forest into named arrays plus scalar metadata."""
    check_is_fitted(est, "trees_")
    offsets = np.zeros(len(est.trees_) + 1, dtype=np.int64)
    for i, tree in enumerate(est.trees_):
        offsets[i + 1] = offsets[i] + tree.n_nodes
    arrays = {
        "tree_offsets": offsets,
        "node_feature": np.concatenate([t.feature for t in est.trees_]),
        "node_threshold": np.concatenate([t.threshold for t in est.trees_]),
        "node_left": np.concatenate([t.left for t in est.trees_]),
        "node_right": np.concatenate([t.right for t in est.trees_]),
        "node_value": np.concatenate([t.value for t in est.trees_]),
    }
    meta = {
        "n_trees": est.n_trees,
        "max_depth": est.max_depth,
        "min_leaf": est.min_leaf,
        "features_per_split": est.features_per_split,
        "random_state": est.random_state,
        "n_features_in": est.n_features_in_,
    }
    return arrays, meta


def from_payload(arrays, meta) -> ForestRegressor:
    est = ForestRegressor(
        n_trees=meta["n_trees"],
        max_depth=meta["max_depth"],
        min_leaf=meta["min_leaf"],
        features_per_split=meta["features_per_split"],
        random_state=meta["random_state"],
    )
    offsets = arrays["tree_offsets"]
    est.trees_ = []
    for i in range(len(offsets) - 1):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        est.trees_.append(Tree(
            feature=arrays["node_feature"][lo:hi],
            threshold=arrays["node_threshold"][lo:hi],
            left=arrays["node_left"][lo:hi],
            right=arrays["node_right"][lo:hi],
            value=arrays["node_value"][lo:hi],
        ))
    est.n_features_in_ = int(meta["n_features_in"])
    return est
