from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..data import NUM_CLASSES


@dataclass
class KNNModel:
    X: np.ndarray
    y: np.ndarray


def knn_fit(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("KNN needs a non-empty training set")
    return KNNModel(X, y)


def knn_predict(model, X, k):
    """Majority vote among the k nearest (Euclidean) training points.

    Equal distances keep training order (stable sort); equal vote counts go
    to the lowest class ordinal.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not 1 <= k <= len(model.y):
        raise ValueError(f"k must lie in [1, {len(model.y)}], got {k}")
    d = kernels.sq_distances(X, model.X)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    votes = np.zeros((len(X), NUM_CLASSES), dtype=np.int64)
    for i, row in enumerate(model.y[nearest]):
        votes[i] = np.bincount(row, minlength=NUM_CLASSES)
    return np.argmax(votes, axis=1)
