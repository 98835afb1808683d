import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantbench.classifier import FittedScores, LogisticModel, RocCurve
from quantbench.count import (DegenerateRates, ThresholdPolicy, ac, adjusted_count, cc, cc_from_predictions,
                              median_sweep, pac, select_threshold, threshold_method, threshold_quantify)
from quantbench.oracles import oracle_cc_expectation

Z90 = 1.2815515655446004  # standard normal 0.9 quantile


def step_model(slope=1.0):
    """Binary model scoring class 0 by sigmoid(slope * x) on one feature."""
    return LogisticModel(np.array([[slope, 0.0], [0.0, 0.0]]), np.array([0, 1]), 2)


def scores_from(rows, labels, model=None):
    rows = np.asarray(rows, dtype=float)
    return FittedScores(rows, np.asarray(labels), np.zeros(len(labels), dtype=int),
                        model or LogisticModel.zeros(1, rows.shape[1]))


def test_cc_examples():
    np.testing.assert_allclose(cc_from_predictions(np.array([0, 0, 1, 1]), 2).values, [0.5, 0.5])
    np.testing.assert_allclose(cc_from_predictions(np.array([2, 2, 2]), 3).values, [0, 0, 1])
    X = np.array([[1.0], [2.0], [3.0], [-1.0], [-2.0], [-3.0], [-4.0], [-5.0], [-6.0], [-7.0]])
    np.testing.assert_allclose(cc(step_model(), X).values, [0.3, 0.7])


def test_oracle_cc_expectation():
    assert oracle_cc_expectation(0.5, 0.8, 0.2) == pytest.approx(0.5)
    assert oracle_cc_expectation(0.0, 0.9, 0.1) == pytest.approx(0.1)
    assert oracle_cc_expectation(1.0, 0.9, 0.1) == pytest.approx(0.9)


def _stream(p, n, rng):
    npos = rng.binomial(n, p)
    x = np.r_[rng.normal(Z90, 1, npos), rng.normal(-Z90, 1, n - npos)]
    return x[:, None]


@pytest.mark.parametrize("p", [0.0, 0.3, 0.75])
def test_cc_bias_and_ac_correction(p):
    # the step model thresholds at 0, so tpr = 0.9 and fpr = 0.1 exactly in expectation
    rng = np.random.default_rng(int(p * 100))
    ccs, acs = [], []
    for _ in range(200):
        ppos = cc(step_model(), _stream(p, 500, rng))[0]
        ccs.append(ppos)
        acs.append((ppos - 0.1) / 0.8)  # unclipped so the mean is unbiased
    assert abs(np.mean(ccs) - oracle_cc_expectation(p, 0.9, 0.1)) < 0.02
    assert abs(np.mean(acs) - p) < 0.02


def test_ac_examples():
    assert ac(0.5, 0.8, 0.2) == pytest.approx(0.5)
    assert ac(0.2, 0.8, 0.2) == 0.0
    assert ac(0.9, 0.8, 0.2) == 1.0
    with pytest.raises(DegenerateRates):
        ac(0.5, 0.4, 0.4)


def test_pac_examples():
    assert pac(0.5, 0.9, 0.1) == pytest.approx(0.5)
    assert pac(0.9, 0.9, 0.1) == 1.0
    assert pac(0.3, 0.7, 0.2) == pytest.approx(0.2)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_ac_monotone(p1, p2, a, b):
    tpr, fpr = max(a, b), min(a, b)
    if tpr == fpr:
        return
    lo, hi = min(p1, p2), max(p1, p2)
    assert ac(lo, tpr, fpr) <= ac(hi, tpr, fpr)
    assert ac(p1, 1.0, 0.0) == p1


def test_degenerate_falls_back_to_count():
    s = scores_from([[0.9, 0.1], [0.9, 0.1]], [0, 1], step_model())
    est = adjusted_count(s, np.array([[1.0], [-1.0], [-2.0], [-3.0]]))
    np.testing.assert_allclose(est.values, [0.25, 0.75])
    assert "degenerate" in est.flags


CURVE = RocCurve(np.array([0.7, 0.3]), np.array([0.6, 0.9]), np.array([0.1, 0.5]))


def test_select_threshold_examples():
    assert CURVE.thresholds[select_threshold(CURVE, "tsmax")] == 0.7
    assert CURVE.thresholds[select_threshold(CURVE, "ts50")] == 0.7
    roc = RocCurve(np.array([0.8, 0.5, 0.2]), np.array([0.3, 0.7, 0.95]), np.array([0.05, 0.3, 0.8]))
    assert select_threshold(roc, "tsx") == 1


def test_select_threshold_ties_to_higher():
    roc = RocCurve(np.array([0.8, 0.5]), np.array([0.6, 0.9]), np.array([0.1, 0.4]))
    assert select_threshold(roc, "tsmax") == 0


def test_policy_validation():
    with pytest.raises(ValueError):
        ThresholdPolicy("tsx", ms_denominator_floor=0.0)
    with pytest.raises(ValueError):
        ThresholdPolicy("mix")


def test_median_sweep_median_then_clip():
    # per-threshold raw estimates 0.2, 0.4, 0.9 (tpr=1, fpr=0 so raw == ppos)
    assert median_sweep([0.2, 0.4, 0.9], [1, 1, 1], [0, 0, 0])[0] == pytest.approx(0.4)
    # even count averages the middle pair
    assert median_sweep([0.2, 0.4], [1, 1], [0, 0])[0] == pytest.approx(0.3)
    value, flags = median_sweep([1.3, 1.2, 0.1], [1, 1, 1], [0, 0, 0])
    assert value == 1.0 and "clipped" in flags
    assert median_sweep([0.5], [0.6], [0.5], 0.25) is None


def test_ms_falls_back_to_tsmax():
    pos = [[0.9, 0.1]] + [[0.1, 0.9]] * 9
    neg = [[0.1, 0.9]] * 10
    s = scores_from(pos + neg, [0] * 10 + [1] * 10)
    X = np.zeros((4, 1))
    est = threshold_method(s, X, "ms")
    assert "fallback" in est.flags
    assert est[0] == threshold_method(s, X, "tsmax")[0]


def _separable(rng):
    pos = rng.uniform(0.6, 1.0, 40)
    neg = rng.uniform(0.0, 0.4, 60)
    rows = np.c_[np.r_[pos, neg], 1 - np.r_[pos, neg]]
    return scores_from(rows, [0] * 40 + [1] * 60), pos, neg


@pytest.mark.parametrize("kind", ["tsx", "tsmax"])
def test_separable_scores_exact(kind):
    # the chosen threshold separates the classes, so tpr = 1 and fpr = 0 there
    rng = np.random.default_rng(3)
    s, _, _ = _separable(rng)
    test = np.r_[rng.uniform(0.6, 1.0, 13), rng.uniform(0.0, 0.4, 37)]
    assert threshold_quantify(s, test, kind) == pytest.approx(13 / 50)


@pytest.mark.parametrize("kind", ["tsx", "ts50", "tsmax", "ms"])
def test_matching_class_conditionals_exact(kind):
    # test scores reuse the training scores class by class (positives twice),
    # so every threshold's rates transfer exactly
    s, pos, neg = _separable(np.random.default_rng(3))
    test = np.r_[pos, pos, neg]
    assert threshold_quantify(s, test, kind) == pytest.approx(80 / 140, abs=1e-12)


def test_ms_within_surviving_range():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = 30
        tpr = np.sort(rng.uniform(0.3, 1, n))
        fpr = np.sort(rng.uniform(0, 0.4, n))
        ppos = rng.uniform(0, 1, n)
        keep = tpr - fpr >= 0.25
        if not keep.any():
            continue
        raw = (ppos[keep] - fpr[keep]) / (tpr[keep] - fpr[keep])
        v = median_sweep(ppos, tpr, fpr)[0]
        assert np.clip(raw.min(), 0, 1) <= v <= np.clip(raw.max(), 0, 1)
