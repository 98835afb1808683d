"""Method registry, shared per-draw classifier artifacts and the one-vs-rest wrapper."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import count, dm, neighbors
from .classifier import ClassifierConfig, FittedScores, cross_val_scores
from .core import PrevalenceEstimate, QuantificationError, ovr_combine
from .dataset import Dataset

NATIVE, OVR, BINARY = "native", "ovr", "binary"


@dataclass(frozen=True)
class MethodInfo:
    name: str
    multiclass: str  # how L > 2 is handled: native, ovr, or binary (unsupported)
    needs: str  # scores, binned, or features
    run: Callable = field(repr=False)
    defaults: dict = field(default_factory=dict)


def _scores_method(fn, binary=False):
    if binary:
        return lambda ctx, pos, **kw: fn(ctx.binary_scores(pos), ctx.test_features, **kw)
    return lambda ctx, pos, **kw: fn(ctx.scores, ctx.test_features, **kw)


def _threshold(kind):
    def run(ctx, pos, ms_denominator_floor=0.25, decimals=2):
        policy = count.ThresholdPolicy(kind, ms_denominator_floor, decimals)
        return count.threshold_method(ctx.binary_scores(pos), ctx.test_features, policy)
    return run


def _cc(ctx, pos):
    return count.cc(ctx.scores.model, ctx.test_features)


def _pcc(ctx, pos):
    return neighbors.pcc(ctx.scores.model, ctx.test_features)


def _readme(ctx, pos, subset_count=50, subset_size=None, cell_cap=4096):
    return dm.readme(ctx.train_binned, ctx.test_binned, subset_count, subset_size, ctx.seed, cell_cap)


def _hdx(ctx, pos):
    return dm.hdx(ctx.train_binned, ctx.test_binned)


def _ed(ctx, pos):
    return dm.energy_distance_quantify(ctx.train, ctx.test_features)


def _pwk(ctx, pos, k=10, alpha=1.0):
    return neighbors.pwk(ctx.train, ctx.test_features, k, alpha)


METHODS: dict[str, MethodInfo] = {m.name: m for m in [
    MethodInfo("cc", NATIVE, "scores", _cc),
    MethodInfo("acc", OVR, "scores", _scores_method(count.adjusted_count, True)),
    MethodInfo("pcc", NATIVE, "scores", _pcc),
    MethodInfo("pacc", OVR, "scores", _scores_method(count.probabilistic_adjusted_count, True)),
    MethodInfo("tsx", OVR, "scores", _threshold("tsx")),
    MethodInfo("ts50", OVR, "scores", _threshold("ts50")),
    MethodInfo("tsmax", OVR, "scores", _threshold("tsmax")),
    MethodInfo("ms", OVR, "scores", _threshold("ms"), {"ms_denominator_floor": 0.25}),
    MethodInfo("gac", NATIVE, "scores", _scores_method(dm.gac)),
    MethodInfo("gpac", NATIVE, "scores", _scores_method(dm.gpac)),
    MethodInfo("dys", OVR, "scores", _scores_method(dm.dys, True), {"bins": 10}),
    MethodInfo("fmm", OVR, "scores", _scores_method(dm.fmm, True), {"bins": 100}),
    MethodInfo("readme", NATIVE, "binned", _readme, {"subset_count": 50}),
    MethodInfo("hdx", NATIVE, "binned", _hdx),
    MethodInfo("hdy", NATIVE, "scores", _scores_method(dm.hdy)),
    MethodInfo("fm", NATIVE, "scores", _scores_method(dm.fm)),
    MethodInfo("ed", NATIVE, "features", _ed),
    MethodInfo("em", NATIVE, "scores", _scores_method(dm.em_quantify)),
    MethodInfo("cde", BINARY, "scores", _scores_method(dm.cde, True)),
    MethodInfo("pwk", NATIVE, "features", _pwk, {"k": 10, "alpha": 1.0}),
]}


def one_vs_rest(data: Dataset, positive: int) -> Dataset:
    """Relabel so that ``positive`` becomes class 0 and every other class 1."""
    y = np.where(data.labels == positive, 0, 1)
    return data.with_labels(y, 2, (data.class_names[positive], "rest"))


class Context:
    """Per-draw inputs plus lazily fitted classifier artifacts.

    Every method run through one context consumes the same fitted scores, so
    differences between methods never come from different classifiers.
    """

    def __init__(self, train: Dataset, test_features, config: ClassifierConfig = ClassifierConfig(),
                 folds: int = 10, seed: int = 0, train_binned: Dataset | None = None, test_binned=None):
        self.train = train
        self.test_features = np.asarray(test_features, dtype=float)
        self.config = config
        self.folds = folds
        self.seed = seed
        self.train_binned = train_binned
        self.test_binned = test_binned
        self._scores: FittedScores | None = None
        self._binary: dict[int, FittedScores] = {}

    @property
    def n_classes(self) -> int:
        return self.train.n_classes

    @property
    def scores(self) -> FittedScores:
        if self._scores is None:
            self._scores = cross_val_scores(self.train, self.config, self.folds, self.seed)
        return self._scores

    def binary_scores(self, positive: int) -> FittedScores:
        """Scores for ``positive`` (as class 0) against the rest."""
        if self.n_classes == 2 and positive == 0:
            return self.scores
        if positive not in self._binary:
            self._binary[positive] = cross_val_scores(one_vs_rest(self.train, positive), self.config,
                                                      self.folds, self.seed)
        return self._binary[positive]

    def used_hash(self) -> str:
        h = hashlib.sha256()
        if self._scores is not None:
            h.update(self._scores.content_hash().encode())
        for k in sorted(self._binary):
            h.update(self._binary[k].content_hash().encode())
        return h.hexdigest()[:16] if (self._scores is not None or self._binary) else ""


@dataclass(frozen=True)
class QuantifierSpec:
    method: str
    params: dict = field(default_factory=dict)
    classifier: ClassifierConfig = ClassifierConfig()
    strategy: str = "auto"  # auto, native, or ovr

    def __post_init__(self):
        if self.method not in METHODS:
            raise QuantificationError(f"unknown method {self.method!r}")
        if self.strategy not in ("auto", NATIVE, OVR):
            raise QuantificationError(f"unknown multiclass strategy {self.strategy!r}")

    def resolve_strategy(self, n_classes: int) -> str:
        info = METHODS[self.method]
        if n_classes == 2:
            if self.strategy == OVR:
                if info.multiclass != OVR:
                    raise QuantificationError(f"{self.method} does not offer one-vs-rest")
                return OVR
            return NATIVE
        if info.multiclass == BINARY:
            raise QuantificationError(f"{self.method} supports binary problems only")
        wanted = info.multiclass if self.strategy == "auto" else self.strategy
        if wanted != info.multiclass:
            raise QuantificationError(f"{self.method} supports only the {info.multiclass} multiclass strategy")
        return wanted


def run_method(spec: QuantifierSpec, ctx: Context) -> PrevalenceEstimate:
    info = METHODS[spec.method]
    if info.needs == "binned" and ctx.train_binned is None:
        raise QuantificationError(f"{spec.method} needs binned features")
    params = {**info.defaults, **spec.params}
    strategy = spec.resolve_strategy(ctx.n_classes)
    if strategy == NATIVE:
        return info.run(ctx, 0, **params)
    per_class, flags = [], set()
    for j in range(ctx.n_classes):
        est = info.run(ctx, j, **params)
        per_class.append(est[0])
        flags |= est.flags
    combined = ovr_combine(per_class)
    return combined.with_flags(*flags)


def quantify(spec: QuantifierSpec | str, train: Dataset, test_features, seed: int = 0, folds: int = 10,
             train_binned: Dataset | None = None, test_binned=None) -> PrevalenceEstimate:
    """Estimate the class distribution of ``test_features``.

    ``train`` and ``test_features`` should already be preprocessed; methods
    that need discretized features (readme, hdx) also take the binned views.
    """
    if isinstance(spec, str):
        spec = QuantifierSpec(spec)
    test_features = np.asarray(test_features, dtype=float)
    if test_features.shape[0] == 0:
        raise QuantificationError("empty test set")
    ctx = Context(train, test_features, spec.classifier, folds, seed, train_binned, test_binned)
    return run_method(spec, ctx)
