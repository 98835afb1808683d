"""Evaluation scenario grids and prevalence-constrained undersampling."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

BINARY_TRAIN_POS = (0.05, 0.1, 0.3, 0.5, 0.7, 0.9)
BINARY_TEST_POS = (0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
TRAIN_FRACTIONS = (0.1, 0.3, 0.5, 0.7)
DEFAULT_SEEDS = tuple(range(10))

MULTICLASS_DISTS = {
    3: (
        [(0.2, 0.5, 0.3), (0.05, 0.8, 0.15), (0.35, 0.3, 0.35)],
        [(0.1, 0.7, 0.2), (0.55, 0.1, 0.35), (0.35, 0.55, 0.1), (0.4, 0.25, 0.35), (0.0, 0.05, 0.95)],
    ),
    4: (
        [(0.5, 0.3, 0.1, 0.1), (0.7, 0.2, 0.1, 0.1), (0.25, 0.25, 0.25, 0.25)],
        [(0.65, 0.25, 0.05, 0.05), (0.2, 0.25, 0.3, 0.25), (0.45, 0.15, 0.2, 0.2), (0.2, 0.0, 0.0, 0.8),
         (0.3, 0.25, 0.35, 0.1)],
    ),
    5: (
        [(0.05, 0.2, 0.1, 0.2, 0.45), (0.05, 0.1, 0.7, 0.1, 0.05), (0.2, 0.2, 0.2, 0.2, 0.2)],
        [(0.15, 0.1, 0.65, 0.1, 0.0), (0.45, 0.1, 0.3, 0.05, 0.1), (0.2, 0.25, 0.25, 0.1, 0.2),
         (0.35, 0.05, 0.05, 0.05, 0.5), (0.05, 0.25, 0.15, 0.15, 0.4)],
    ),
}


class InfeasibleScenario(ValueError):
    pass


def _check_dist(d, what):
    d = np.asarray(d, dtype=float)
    if d.ndim != 1 or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
        raise ValueError(f"{what} must be a probability vector, got {d.tolist()}")
    return d


@dataclass(frozen=True)
class ScenarioSpec:
    train_dist: tuple[float, ...]
    test_dist: tuple[float, ...]
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        a = _check_dist(self.train_dist, "train_dist")
        b = _check_dist(self.test_dist, "test_dist")
        if a.size != b.size:
            raise ValueError("train and test distributions differ in length")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        object.__setattr__(self, "train_dist", tuple(float(v) for v in a))
        object.__setattr__(self, "test_dist", tuple(float(v) for v in b))

    @property
    def n_classes(self) -> int:
        return len(self.train_dist)

    def demand(self) -> np.ndarray:
        """Fraction of the sampled total that each class must supply."""
        f = self.train_fraction
        return f * np.array(self.train_dist) + (1 - f) * np.array(self.test_dist)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.train_dist, self.test_dist, self.train_fraction, seed)


@dataclass(frozen=True, eq=False)
class DrawnSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    realized_train_dist: np.ndarray
    realized_test_dist: np.ndarray


def max_feasible_total(class_counts, spec: ScenarioSpec) -> int:
    counts = np.asarray(class_counts, dtype=float)
    if counts.size != spec.n_classes:
        raise ValueError("class_counts length does not match the scenario")
    demand = spec.demand()
    need = demand > 0
    if np.any(counts[need] == 0):
        missing = np.flatnonzero(need & (counts == 0)).tolist()
        raise InfeasibleScenario(f"classes {missing} are requested but have no instances")
    # the 1e-9 slack absorbs representation error in products such as 0.8*0.6
    return int(math.floor(np.min(counts[need] / demand[need]) + 1e-9))


def largest_remainder(targets, total: int) -> np.ndarray:
    """Round nonnegative ``targets`` to integers summing to ``total``.

    Entries with a zero target stay at zero.
    """
    t = np.asarray(targets, dtype=float)
    base = np.floor(t + 1e-9).astype(np.int64)
    rest = total - int(base.sum())
    if rest > 0:
        frac = np.where(t > 0, t - base, -np.inf)
        # stable sort keeps ties on the lower class index
        order = np.argsort(-frac, kind="stable")[:rest]
        base[order] += 1
    return base


def split_counts(n: int, spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    f = spec.train_fraction
    n_train = int(math.floor(n * f + 0.5))
    tr = largest_remainder(n * f * np.array(spec.train_dist), n_train)
    te = largest_remainder(n * (1 - f) * np.array(spec.test_dist), n - n_train)
    return tr, te


def draw_split(data: Dataset, spec: ScenarioSpec) -> DrawnSplit:
    """Undersample ``data`` to the requested train/test class distributions.

    Each class is sampled from its own counter-based stream keyed on
    ``(spec.seed, class)``, so the draw does not depend on class order.
    """
    counts = data.class_counts()
    n = max_feasible_total(counts, spec)
    while n >= spec.n_classes:
        tr, te = split_counts(n, spec)
        if np.all(tr + te <= counts):
            break
        # rounding both sides up can exceed a binding class by one instance
        n -= 1
    else:
        raise InfeasibleScenario(f"at most {n} instances can be sampled for {spec}")
    train_idx, test_idx = [], []
    for j in range(spec.n_classes):
        members = np.flatnonzero(data.labels == j)
        rng = np.random.Generator(np.random.Philox(key=[spec.seed, j]))
        chosen = rng.permutation(members)[: tr[j] + te[j]]
        train_idx.append(chosen[: tr[j]])
        test_idx.append(chosen[tr[j]:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return DrawnSplit(train_idx, test_idx, tr / max(tr.sum(), 1), te / max(te.sum(), 1))


def binary_grid(seed: int = 0) -> list[ScenarioSpec]:
    return [ScenarioSpec((p, 1 - p), (q, 1 - q), f, seed)
            for p, q, f in itertools.product(BINARY_TRAIN_POS, BINARY_TEST_POS, TRAIN_FRACTIONS)]


def _normalized(dists):
    out = []
    for d in dists:
        total = math.fsum(d)
        out.append(tuple(v / total for v in d) if abs(total - 1.0) > 1e-9 else tuple(d))
    return out


def multiclass_grid(n_classes: int, seed: int = 0) -> list[ScenarioSpec]:
    if n_classes not in MULTICLASS_DISTS:
        raise ValueError(f"no multiclass grid for L={n_classes}; supported: {sorted(MULTICLASS_DISTS)}")
    # the table is kept verbatim; its (0.7, 0.2, 0.1, 0.1) entry sums to 1.1 and is rescaled
    trains, tests = (_normalized(d) for d in MULTICLASS_DISTS[n_classes])
    return [ScenarioSpec(p, q, f, seed) for p, q, f in itertools.product(trains, tests, TRAIN_FRACTIONS)]


def shift_category(train_dist, test_dist, mode: str = "binary") -> str:
    a, b = np.asarray(train_dist, dtype=float), np.asarray(test_dist, dtype=float)
    if a.shape != b.shape:
        raise ValueError("distributions differ in length")
    d = float(np.abs(a - b).sum())
    # grid values like 0.9 - 0.5 are not exact in binary floating point
    d = round(d, 12)
    if mode == "binary":
        return "minor" if d < 0.4 else ("medium" if d < 0.8 else "major")
    if mode == "multiclass":
        return "minor" if d < 0.5 else "major"
    raise ValueError(f"unknown mode {mode!r}")
