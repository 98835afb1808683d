"""Shared test constructions."""

import numpy as np

from quantbench.classifier import FittedScores


class PassThroughModel:
    """Stand-in classifier whose 'features' already are the score rows."""

    def __init__(self, n_classes):
        self.n_classes = n_classes
        self.weights = np.zeros((1, n_classes))

    def predict_proba(self, X):
        return np.asarray(X, dtype=float)


def fitted(rows, labels):
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels)
    return FittedScores(rows, labels, np.zeros(labels.size, dtype=int), PassThroughModel(rows.shape[1]))


def binary_rows(pos_scores):
    s = np.asarray(pos_scores, dtype=float)
    return np.c_[s, 1 - s]


def random_interior(L, rng, low=0.05):
    while True:
        t = rng.dirichlet(np.ones(L))
        if t.min() > low:
            return t
