"""Why counting predictions is not enough under label shift.

A classifier with tpr ~ 0.9 and fpr ~ 0.1 is trained on a balanced sample and
then asked how many positives a test set with 10% positives contains.
Counting its predictions drifts toward the training prevalence; correcting the
count with the cross-validated rates removes most of that drift.
"""

import numpy as np

from quantbench import synth_gaussian
from quantbench.quantify import Context, QuantifierSpec, run_method

# class 0 is the positive class; the means put the 0.5 decision boundary at x = 0
MEANS = [[1.2816], [-1.2816]]
METHODS = ("cc", "pcc", "acc", "pacc", "ms", "dys", "em")

est = {m: [] for m in METHODS}
for draw in range(50):
    train = synth_gaussian([250, 250], MEANS, seed=2 * draw, name="train")
    test = synth_gaussian([100, 900], MEANS, seed=2 * draw + 1, name="test")
    # one context: every method below sees the same cross-validated scores
    ctx = Context(train, test.features, seed=draw)
    for m in METHODS:
        est[m].append(run_method(QuantifierSpec(m), ctx)[0])

print("true positive prevalence: 0.100")
print("expected plain count:     0.1*0.9 + 0.9*0.1 = 0.180\n")
print(f"{'method':<6} {'mean':>7} {'std':>7}")
for m in METHODS:
    v = np.array(est[m])
    print(f"{m:<6} {v.mean():7.3f} {v.std():7.3f}")
