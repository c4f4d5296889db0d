"""Random forest of CART trees with Gini impurity splits."""
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..augment import derive_seed
from ..data import NUM_CLASSES


def gini_impurity(counts):
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def gini_gain(labels, go_left, n_classes=NUM_CLASSES):
    """Impurity decrease of splitting ``labels`` by the boolean mask."""
    labels = np.asarray(labels)
    go_left = np.asarray(go_left, dtype=bool)
    n = len(labels)
    left, right = labels[go_left], labels[~go_left]
    parent = gini_impurity(np.bincount(labels, minlength=n_classes))
    return parent - (len(left) / n) * gini_impurity(np.bincount(left, minlength=n_classes)) \
        - (len(right) / n) * gini_impurity(np.bincount(right, minlength=n_classes))


@dataclass
class DecisionTree:
    feature: np.ndarray     # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray      # per-node class counts

    @property
    def n_nodes(self):
        return len(self.feature)

    def leaf_index(self, X):
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X):
        return np.argmax(self.counts[self.leaf_index(X)], axis=1)

    def same_structure(self, other):
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("feature", "threshold", "left", "right", "counts"))


def _n_split_features(spec, d):
    if spec is None or spec == "all":
        return d
    if spec == "sqrt":
        return max(1, int(np.sqrt(d)))
    if isinstance(spec, float):
        return max(1, min(d, int(round(spec * d))))
    return max(1, min(d, int(spec)))


def build_tree(X, y, rng, max_depth=None, features_per_split="sqrt", min_leaf=1, n_classes=NUM_CLASSES):
    n, d = X.shape
    m = _n_split_features(features_per_split, d)
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) < 2 * min_leaf or np.count_nonzero(counts[node]) < 2:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        cand = np.sort(rng.choice(d, size=m, replace=False)) if m < d else np.arange(d)
        sub = np.ascontiguousarray(X[np.ix_(idx, cand)])
        f, thr, _ = kernels.best_split(sub, y[idx], np.arange(len(cand)), n_classes, min_leaf)
        if f < 0:
            continue
        f = int(cand[f])
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                        np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64))


@dataclass
class RandomForest:
    trees: list

    def votes(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        v = np.zeros((len(X), NUM_CLASSES), dtype=np.int64)
        rows = np.arange(len(X))
        for t in self.trees:
            np.add.at(v, (rows, t.predict(X)), 1)
        return v


def rf_fit(X, y, n_trees=100, max_depth=None, features_per_split="sqrt", seed=0, bootstrap=True):
    """Fit ``n_trees`` trees; tree ``t`` draws from ``derive_seed(seed, t)``."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(derive_seed(seed, t))
        idx = rng.integers(0, len(y), size=len(y)) if bootstrap else np.arange(len(y))
        trees.append(build_tree(X[idx], y[idx], rng, max_depth, features_per_split))
    return RandomForest(trees)


def rf_predict(model, X):
    return np.argmax(model.votes(X), axis=1)
