"""Classify-and-count and the adjusted-count family (AC, PAC, TSX, TS50, TSMax, MS)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import FittedScores, RocCurve, class_conditional_mean_scores, confusion_rates, \
    positive_scores, rates_at, roc_curve
from .core import PrevalenceEstimate, QuantificationError, binary_estimate, clip_to_unit


class DegenerateRates(QuantificationError):
    """tpr equals fpr, so the count cannot be adjusted."""


def cc_from_predictions(pred, n_classes: int) -> PrevalenceEstimate:
    return PrevalenceEstimate(np.bincount(pred, minlength=n_classes) / len(pred))


def cc(model, test_features) -> PrevalenceEstimate:
    P = model.predict_proba(test_features)
    return cc_from_predictions(np.argmax(P, axis=1), P.shape[1])


def ac(ppos: float, tpr: float, fpr: float) -> float:
    if tpr == fpr:
        raise DegenerateRates(f"tpr == fpr == {tpr}")
    return clip_to_unit((ppos - fpr) / (tpr - fpr))


def pac(mean_test_score: float, mean_score_given_pos: float, mean_score_given_neg: float) -> float:
    return ac(mean_test_score, mean_score_given_pos, mean_score_given_neg)


def _adjusted(ppos, tpr, fpr, positive_class=0, extra=()):
    flags = set(extra)
    try:
        raw = (ppos - fpr) / (tpr - fpr) if tpr != fpr else None
        est = ac(ppos, tpr, fpr)
    except DegenerateRates:
        # fall back to the unadjusted count
        return binary_estimate(ppos, positive_class, flags | {"degenerate"})
    if raw < 0 or raw > 1:
        flags.add("clipped")
    return binary_estimate(est, positive_class, flags)


def adjusted_count(scores: FittedScores, test_features, positive_class: int = 0) -> PrevalenceEstimate:
    rates = confusion_rates(scores)
    q = positive_class
    tpr, fpr = rates.matrix[q, q], rates.matrix[q, 1 - q]
    ppos = cc(scores.model, test_features)[q]
    return _adjusted(ppos, tpr, fpr, q)


def probabilistic_adjusted_count(scores: FittedScores, test_features, positive_class: int = 0) -> PrevalenceEstimate:
    M = class_conditional_mean_scores(scores)
    q = positive_class
    mean_test = float(np.mean(scores.predict_proba(test_features)[:, q]))
    return _adjusted(mean_test, M[q, q], M[q, 1 - q], q)


POLICIES = ("tsx", "ts50", "tsmax", "ms")


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str
    ms_denominator_floor: float = 0.25
    decimals: int = 2

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown threshold policy {self.kind!r}")
        if not 0 < self.ms_denominator_floor <= 1:
            raise ValueError("ms_denominator_floor must lie in (0, 1]")


def _first_best(values, tol=1e-12) -> int:
    # thresholds are sorted descending, so the first hit is the highest threshold
    return int(np.flatnonzero(values <= values.min() + tol)[0])


def select_threshold(roc: RocCurve, policy: ThresholdPolicy | str) -> int:
    kind = policy.kind if isinstance(policy, ThresholdPolicy) else policy
    if roc.thresholds.size == 0:
        raise QuantificationError("empty ROC curve")
    tpr, fpr = roc.tpr_at, roc.fpr_at
    if kind in ("tsmax", "ms"):
        return _first_best(-(tpr - fpr))
    if kind == "tsx":
        return _first_best(np.abs(fpr - (1.0 - tpr)))
    if kind == "ts50":
        return _first_best(np.abs(tpr - 0.5))
    raise ValueError(f"unknown threshold policy {kind!r}")


def _threshold_estimate(scores: FittedScores, test_scores, policy: ThresholdPolicy, positive_class=0):
    roc = roc_curve(scores, positive_class, policy.decimals)
    if roc.thresholds.size == 0:
        raise QuantificationError("empty ROC curve")
    test = positive_scores(test_scores, positive_class, policy.decimals)
    ppos = (test[None, :] >= roc.thresholds[:, None]).mean(axis=1)
    if policy.kind == "ms":
        swept = median_sweep(ppos, roc.tpr_at, roc.fpr_at, policy.ms_denominator_floor)
        if swept is not None:
            return swept
        i = select_threshold(roc, "tsmax")
        value, flags = _single(ppos[i], roc.tpr_at[i], roc.fpr_at[i])
        return value, flags | {"fallback"}
    i = select_threshold(roc, policy)
    return _single(ppos[i], roc.tpr_at[i], roc.fpr_at[i])


def median_sweep(ppos, tpr, fpr, floor: float = 0.25):
    """Median of the raw adjusted estimates over thresholds with ``tpr - fpr >= floor``.

    The median is clipped after it is taken. Returns ``(value, flags)``, or
    None when no threshold passes the floor.
    """
    ppos, tpr, fpr = (np.asarray(a, dtype=float) for a in (ppos, tpr, fpr))
    denom = tpr - fpr
    keep = denom >= floor
    if not np.any(keep):
        return None
    med = float(np.median((ppos[keep] - fpr[keep]) / denom[keep]))
    return clip_to_unit(med), ({"clipped"} if not 0 <= med <= 1 else set())


def _single(ppos, tpr, fpr):
    est = _adjusted(float(ppos), float(tpr), float(fpr))
    return float(est[0]), set(est.flags)


def threshold_quantify(scores: FittedScores, test_scores, policy: ThresholdPolicy | str,
                       positive_class: int = 0) -> float:
    """Positive-class prevalence from a threshold-selection policy.

    ``test_scores`` are class scores of the refit model on the test set (a
    matrix, or the positive-class column). Rates at each candidate threshold
    come from the out-of-fold training scores.
    """
    if isinstance(policy, str):
        policy = ThresholdPolicy(policy)
    return _threshold_estimate(scores, test_scores, policy, positive_class)[0]


def threshold_method(scores: FittedScores, test_features, policy: ThresholdPolicy | str,
                     positive_class: int = 0) -> PrevalenceEstimate:
    if isinstance(policy, str):
        policy = ThresholdPolicy(policy)
    value, flags = _threshold_estimate(scores, scores.predict_proba(test_features), policy, positive_class)
    return binary_estimate(value, positive_class, flags)
