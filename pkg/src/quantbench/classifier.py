"""Multinomial logistic regression and the cross-validated score machinery."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .dataset import Dataset

PROB_CLIP = 1e-12


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    regularization_weight: float = 1.0
    max_iterations: int = 1000
    convergence_tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.regularization_weight > 0:
            raise ValueError("regularization_weight must be positive")
        if not self.convergence_tolerance > 0:
            raise ValueError("convergence_tolerance must be positive")


def log_loss_objective(w, X, y, n_classes: int, reg: float):
    """Summed softmax log-loss plus ``0.5 * reg * ||W||^2`` and its gradient.

    ``w`` is the flattened ``(D + 1) x n_classes`` weight matrix whose last row
    holds the (unpenalized) intercepts.
    """
    n, d = X.shape
    W = w.reshape(d + 1, n_classes)
    Z = X @ W[:-1] + W[-1]
    lse = logsumexp(Z, axis=1)
    loss = float(np.sum(lse - Z[np.arange(n), y])) + 0.5 * reg * float(np.sum(W[:-1] ** 2))
    P = np.exp(Z - lse[:, None])
    P[np.arange(n), y] -= 1.0
    G = np.empty_like(W)
    G[:-1] = X.T @ P + reg * W[:-1]
    G[-1] = P.sum(axis=0)
    return loss, G.ravel()


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Fitted softmax classifier over ``n_classes`` labels.

    ``classes`` lists the label indices the weights were trained on; labels
    absent from training always receive probability zero.
    """

    weights: np.ndarray  # (D + 1) x len(classes)
    classes: np.ndarray
    n_classes: int
    converged: bool = True
    n_iter: int = 0
    loss_trace: tuple = field(default=(), repr=False)

    @classmethod
    def zeros(cls, n_features: int, n_classes: int) -> "LogisticModel":
        return cls(np.zeros((n_features + 1, n_classes)), np.arange(n_classes), n_classes)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = X @ self.weights[:-1] + self.weights[-1]
        P = np.zeros((X.shape[0], self.n_classes))
        P[:, self.classes] = softmax(Z, axis=1)
        return P

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def fit_logistic(train: Dataset, config: ClassifierConfig = ClassifierConfig()) -> LogisticModel:
    """Fit an L2-penalized multinomial logistic regression with L-BFGS.

    The penalty weight is ``1 / config.regularization_weight``; optimization
    starts from all-zero weights, so repeated fits are bit-identical.
    """
    present = np.flatnonzero(train.class_counts() > 0)
    if present.size < 2:
        raise ClassifierError("training data must contain at least two classes")
    remap = np.full(train.n_classes, -1)
    remap[present] = np.arange(present.size)
    y = remap[train.labels]
    X = train.features
    k = present.size
    w0 = np.zeros((X.shape[1] + 1) * k)
    trace = []

    def record(intermediate_result):
        trace.append(float(intermediate_result.fun))

    res = minimize(log_loss_objective, w0, args=(X, y, k, 1.0 / config.regularization_weight),
                   jac=True, method="L-BFGS-B", callback=record,
                   options={"maxiter": config.max_iterations, "gtol": config.convergence_tolerance,
                            "ftol": 1e-15, "maxcor": 20})
    _, grad = log_loss_objective(res.x, X, y, k, 1.0 / config.regularization_weight)
    converged = bool(np.linalg.norm(grad) < config.convergence_tolerance or res.success)
    return LogisticModel(res.x.reshape(X.shape[1] + 1, k), present, train.n_classes, converged,
                         int(res.nit), tuple(trace))


@dataclass(frozen=True, eq=False)
class FittedScores:
    """Out-of-fold class scores on the training set plus the refit model."""

    oof_scores: np.ndarray
    oof_labels: np.ndarray
    fold_assignment: np.ndarray
    model: LogisticModel

    @property
    def n_classes(self) -> int:
        return self.oof_scores.shape[1]

    def train_prevalence(self) -> np.ndarray:
        return np.bincount(self.oof_labels, minlength=self.n_classes) / self.oof_labels.size

    def predict_proba(self, X) -> np.ndarray:
        return self.model.predict_proba(X)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.oof_scores, self.oof_labels, self.model.weights):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Assign every instance a fold id so per-class fold counts differ by <= 1.

    Within each class the members are shuffled and dealt round-robin; the
    starting fold rotates across classes so fold totals stay balanced too.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    out = np.empty(labels.size, dtype=np.int64)
    start = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        out[members] = (start + np.arange(members.size)) % folds
        start = (start + members.size) % folds
    return out


def cross_val_scores(train: Dataset, config: ClassifierConfig = ClassifierConfig(), folds: int = 10,
                     seed: int = 0) -> FittedScores:
    if np.count_nonzero(train.class_counts()) < 2:
        raise ClassifierError("cross-validation needs at least two classes")
    if folds < 2:
        raise ClassifierError("folds must be >= 2")
    folds = min(folds, train.n_samples)
    assignment = stratified_folds(train.labels, folds, seed)
    oof = np.zeros((train.n_samples, train.n_classes))
    for f in range(folds):
        held = assignment == f
        fit_part = train.subset(np.flatnonzero(~held))
        if np.count_nonzero(fit_part.class_counts()) < 2:
            # only possible on tiny data: fall back to the training prior
            oof[held] = fit_part.class_counts() / max(fit_part.n_samples, 1)
            continue
        oof[held] = fit_logistic(fit_part, config).predict_proba(train.features[held])
    return FittedScores(oof, train.labels.copy(), assignment, fit_logistic(train, config))


@dataclass(frozen=True, eq=False)
class ConfusionRates:
    """Column j holds the distribution of predictions for true class j."""

    matrix: np.ndarray

    @property
    def tpr(self) -> float:
        # binary convention: class 0 is the positive class
        return float(self.matrix[0, 0])

    @property
    def fpr(self) -> float:
        return float(self.matrix[0, 1])


def _require_all_classes(labels, n_classes):
    counts = np.bincount(labels, minlength=n_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ClassifierError(f"class {int(missing[0])} is absent from the out-of-fold labels")
    return counts


def confusion_rates(scores: FittedScores) -> ConfusionRates:
    L = scores.n_classes
    counts = _require_all_classes(scores.oof_labels, L)
    pred = np.argmax(scores.oof_scores, axis=1)
    M = np.zeros((L, L))
    np.add.at(M, (pred, scores.oof_labels), 1.0)
    return ConfusionRates(M / counts)


def class_conditional_mean_scores(scores: FittedScores) -> np.ndarray:
    L = scores.n_classes
    counts = _require_all_classes(scores.oof_labels, L)
    M = np.zeros((L, L))
    np.add.at(M.T, scores.oof_labels, scores.oof_scores)
    return M / counts


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray  # descending
    tpr_at: np.ndarray
    fpr_at: np.ndarray


def positive_scores(scores, positive_class: int = 0, decimals: int | None = 2) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    s = s[:, positive_class] if s.ndim == 2 else s
    return np.round(s, decimals) if decimals is not None else s


def rates_at(threshold: float, pos_scores, neg_scores) -> tuple[float, float]:
    return float(np.mean(pos_scores >= threshold)), float(np.mean(neg_scores >= threshold))


def roc_curve(scores: FittedScores, positive_class: int = 0, decimals: int = 2) -> RocCurve:
    """Rates for every distinct (rounded) out-of-fold positive-class score.

    An instance counts as predicted positive when its rounded score is at
    least the threshold.
    """
    if scores.n_classes != 2:
        raise ClassifierError("ROC curves need a binary problem")
    _require_all_classes(scores.oof_labels, 2)
    s = positive_scores(scores.oof_scores, positive_class, decimals)
    is_pos = scores.oof_labels == positive_class
    thresholds = np.unique(s)[::-1]
    pos, neg = np.sort(s[is_pos]), np.sort(s[~is_pos])
    tpr = 1.0 - np.searchsorted(pos, thresholds, side="left") / pos.size
    fpr = 1.0 - np.searchsorted(neg, thresholds, side="left") / neg.size
    return RocCurve(thresholds, tpr, fpr)
