"""Probabilistic classify-and-count and the class-weighted nearest-neighbor quantifier."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .core import PrevalenceEstimate, QuantificationError
from .count import cc_from_predictions
from .dataset import Dataset


def pcc(model, test_features) -> PrevalenceEstimate:
    return PrevalenceEstimate(model.predict_proba(test_features).mean(axis=0))


def neighbor_weights(class_counts, alpha: float = 1.0) -> np.ndarray:
    """Vote weight per class: ``(N_min / N_c) ** (1 / alpha)``; absent classes get 0."""
    counts = np.asarray(class_counts, dtype=float)
    present = counts > 0
    w = np.zeros_like(counts)
    w[present] = (counts[present].min() / counts[present]) ** (1.0 / alpha)
    return w


def nearest_neighbors(train_X, test_X, k: int, chunk: int = 1024) -> np.ndarray:
    """Indices of the k nearest training rows; distance ties keep the lower index."""
    out = np.empty((test_X.shape[0], k), dtype=np.int64)
    for i in range(0, test_X.shape[0], chunk):
        D = cdist(test_X[i:i + chunk], train_X)
        out[i:i + chunk] = np.argsort(D, axis=1, kind="stable")[:, :k]
    return out


def pwk_predict(train: Dataset, test_features, k: int = 10, alpha: float = 1.0,
                weighted: bool = True) -> np.ndarray:
    if k > train.n_samples:
        raise QuantificationError(f"k={k} exceeds the {train.n_samples} training instances")
    if k < 1:
        raise QuantificationError("k must be >= 1")
    T = np.asarray(test_features, dtype=float)
    nn = nearest_neighbors(train.features, T, k)
    w = neighbor_weights(train.class_counts(), alpha) if weighted else np.ones(train.n_classes)
    votes = np.zeros((T.shape[0], train.n_classes))
    rows = np.repeat(np.arange(T.shape[0]), k)
    labels = train.labels[nn].ravel()
    np.add.at(votes, (rows, labels), w[labels])
    return np.argmax(votes, axis=1)


def pwk(train: Dataset, test_features, k: int = 10, alpha: float = 1.0) -> PrevalenceEstimate:
    return cc_from_predictions(pwk_predict(train, test_features, k, alpha), train.n_classes)
