"""Distribution matching on a three-class problem.

The test set is modelled as a mixture of the class-conditional training
distributions; each method picks the mixture weights that match best under its
own representation and distance.
"""

import numpy as np

from quantbench import synth_gaussian
from quantbench.dataset import apply_preprocess, fit_preprocess
from quantbench.metrics import ae
from quantbench.quantify import Context, QuantifierSpec, run_method
from quantbench.sampling import ScenarioSpec, draw_split

data = synth_gaussian([600, 600, 600], [[0, 0], [2.0, 0.3], [0.4, 2.2]], seed=3, name="three blobs")
spec = ScenarioSpec((1 / 3, 1 / 3, 1 / 3), (0.6, 0.1, 0.3), 0.5, seed=0)
split = draw_split(data, spec)
train, test = data.subset(split.train_indices), data.subset(split.test_indices)
print("train counts", train.class_counts(), " test counts", test.class_counts())

# scaling and binning plans come from the training side only
plan = fit_preprocess(train)
bplan = fit_preprocess(train, bin_continuous=True, bins_per_feature=8)
ctx = Context(apply_preprocess(plan, train), apply_preprocess(plan, test).features, seed=0,
              train_binned=apply_preprocess(bplan, train), test_binned=apply_preprocess(bplan, test).features)

truth = split.realized_test_dist
print(f"\n{'method':<7} estimate                 ae")
for m in ("cc", "gac", "gpac", "fm", "hdy", "hdx", "ed", "readme", "em", "pwk", "ms", "dys"):
    est = run_method(QuantifierSpec(m), ctx)
    print(f"{m:<7} {np.array2string(est.values, precision=3):<24} {ae(truth, est.values):.3f}")
print(f"{'truth':<7} {np.array2string(truth, precision=3)}")
