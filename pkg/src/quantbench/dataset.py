"""Labeled datasets: CSV loading, preprocessing plans, binning and synthetic blobs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "continuous"  # or "categorical"
    cardinality: int = 0

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with integer class labels and a per-column schema.

    ``n_classes`` is stored explicitly so that subsets drawn from a dataset
    keep the label space of their source even when a class is absent.
    """

    features: np.ndarray
    labels: np.ndarray
    schema: tuple[Column, ...]
    name: str = "dataset"
    n_classes: int = 0
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if y.shape != (X.shape[0],):
            raise DataError("labels must be a vector aligned with the feature rows")
        if len(self.schema) != X.shape[1]:
            raise DataError(f"schema has {len(self.schema)} columns, features have {X.shape[1]}")
        n_classes = self.n_classes or (int(y.max()) + 1 if y.size else 0)
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise DataError("labels outside 0..n_classes-1")
        for j, col in enumerate(self.schema):
            if col.is_categorical and X.shape[0]:
                v = X[:, j]
                if np.any(v != np.round(v)) or v.min() < 0 or v.max() >= col.cardinality:
                    raise DataError(f"categorical column {col.name!r} holds codes outside 0..{col.cardinality - 1}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", n_classes)
        if not self.class_names:
            object.__setattr__(self, "class_names", tuple(str(i) for i in range(n_classes)))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def prevalence(self) -> np.ndarray:
        return self.class_counts() / self.n_samples

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.schema, self.name,
                       self.n_classes, self.class_names)

    def with_labels(self, labels, n_classes: int, class_names=()) -> "Dataset":
        return Dataset(self.features, labels, self.schema, self.name, n_classes, tuple(class_names))


def validate_raw(data: Dataset) -> Dataset:
    """Check the invariants that a freshly loaded dataset must satisfy."""
    if data.n_samples < 1 or data.n_features < 1:
        raise DataError("dataset must have at least one row and one feature column")
    if data.n_classes < 2:
        raise DataError("dataset must have at least two classes")
    missing = np.flatnonzero(data.class_counts() == 0)
    if missing.size:
        raise DataError(f"classes {missing.tolist()} never occur in the labels")
    return data


def load_csv(path, target_column: str, categorical_columns: Iterable[str] = (), name: str | None = None) -> Dataset:
    """Read a header-first UTF-8 CSV file into a :class:`Dataset`.

    Rows with any empty cell are dropped. Target values and categorical
    values are recoded to dense integer codes in order of first appearance.
    """
    path = Path(path)
    categorical = set(categorical_columns)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"missing target column {target_column!r}")
        unknown = categorical - set(header)
        if unknown:
            raise DataError(f"categorical columns not in header: {sorted(unknown)}")
        rows = [r for r in reader if r and len(r) == len(header) and all(c.strip() != "" for c in r)]
    if not rows:
        raise DataError(f"{path}: no complete rows left after removing missing values")

    t = header.index(target_column)
    feature_idx = [i for i in range(len(header)) if i != t]
    class_codes: dict[str, int] = {}
    labels = [class_codes.setdefault(r[t].strip(), len(class_codes)) for r in rows]

    columns = []
    X = np.empty((len(rows), len(feature_idx)))
    for out, i in enumerate(feature_idx):
        cname = header[i]
        if cname in categorical:
            codes: dict[str, int] = {}
            X[:, out] = [codes.setdefault(r[i].strip(), len(codes)) for r in rows]
            columns.append(Column(cname, "categorical", len(codes)))
        else:
            try:
                X[:, out] = [float(r[i]) for r in rows]
            except ValueError as exc:
                raise DataError(f"non-numeric value in continuous column {cname!r}: {exc}") from None
            columns.append(Column(cname))

    data = Dataset(X, np.array(labels), tuple(columns), name or path.stem, len(class_codes),
                   tuple(class_codes))
    return validate_raw(data)


def write_csv(data: Dataset, path, target_column: str = "target") -> None:
    """Write ``data`` so that :func:`load_csv` reads it back unchanged."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([c.name for c in data.schema] + [target_column])
        for x, y in zip(data.features, data.labels):
            cells = [str(int(v)) if c.is_categorical else repr(float(v)) for v, c in zip(x, data.schema)]
            w.writerow(cells + [data.class_names[y]])


@dataclass(frozen=True)
class PreprocessPlan:
    """Train-fitted transformation.

    Without binning, continuous columns are standardized and categorical
    columns one-hot encoded. With binning, continuous columns are replaced by
    equal-frequency bin indices and categorical columns pass through as codes.
    """

    input_schema: tuple[Column, ...]
    keep: tuple[int, ...]
    dropped: tuple[int, ...]
    means: dict[int, float]
    stds: dict[int, float]
    onehot: dict[int, int]
    bin_edges: dict[int, np.ndarray] = field(default_factory=dict)
    binned: bool = False

    @property
    def output_schema(self) -> tuple[Column, ...]:
        out = []
        for j in self.keep:
            col = self.input_schema[j]
            if self.binned:
                if col.is_categorical:
                    out.append(col)
                else:
                    out.append(Column(col.name, "categorical", len(self.bin_edges[j]) + 1))
            elif col.is_categorical:
                out.extend(Column(f"{col.name}={c}") for c in range(self.onehot[j]))
            else:
                out.append(Column(col.name))
        return tuple(out)

    @property
    def output_width(self) -> int:
        return len(self.output_schema)


def equal_frequency_edges(values, n_bins: int) -> np.ndarray:
    """Interior cut points splitting ``values`` into ``n_bins`` equal-count bins.

    The k-th cut sits halfway between the sorted values at ranks
    ``round(k*n/n_bins) - 1`` and ``round(k*n/n_bins)``; duplicate cuts are
    merged so the returned edges are strictly increasing.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    cuts = []
    for k in range(1, n_bins):
        r = int(math.floor(k * n / n_bins + 0.5))
        if 0 < r < n:
            cuts.append(0.5 * (v[r - 1] + v[r]))
    edges = np.unique(np.array(cuts, dtype=float))
    # values equal to a cut go to the upper bin, so a cut at the minimum would
    # leave bin 0 empty
    return edges[edges > v[0]] if n else edges


def fit_preprocess(train: Dataset, bin_continuous: bool = False, bins_per_feature: int = 10) -> PreprocessPlan:
    if train.n_samples == 0:
        raise DataError("cannot fit a preprocessing plan on an empty dataset")
    if bin_continuous and bins_per_feature < 2:
        raise DataError("bins_per_feature must be at least 2")
    keep, dropped = [], []
    means, stds, onehot, edges = {}, {}, {}, {}
    X = train.features
    for j, col in enumerate(train.schema):
        v = X[:, j]
        if np.all(v == v[0]):
            dropped.append(j)
            continue
        keep.append(j)
        if col.is_categorical:
            onehot[j] = col.cardinality
        else:
            means[j] = float(v.mean())
            stds[j] = float(v.std())
            if bin_continuous:
                edges[j] = equal_frequency_edges(v, bins_per_feature)
    return PreprocessPlan(train.schema, tuple(keep), tuple(dropped), means, stds, onehot, edges,
                          bin_continuous)


def apply_preprocess(plan: PreprocessPlan, data: Dataset) -> Dataset:
    if tuple(c.name for c in data.schema) != tuple(c.name for c in plan.input_schema) or \
            tuple(c.kind for c in data.schema) != tuple(c.kind for c in plan.input_schema):
        raise DataError("dataset schema does not match the preprocessing plan")
    X = data.features
    blocks = []
    for j in plan.keep:
        col = plan.input_schema[j]
        v = X[:, j]
        if plan.binned:
            if col.is_categorical:
                blocks.append(v[:, None])
            else:
                # values outside the train range fall into the boundary bins
                blocks.append(np.searchsorted(plan.bin_edges[j], v, side="right")[:, None].astype(float))
        elif col.is_categorical:
            blocks.append(np.eye(plan.onehot[j])[v.astype(np.int64)])
        else:
            blocks.append(((v - plan.means[j]) / plan.stds[j])[:, None])
    Z = np.hstack(blocks) if blocks else np.empty((data.n_samples, 0))
    return Dataset(Z, data.labels, plan.output_schema, data.name, data.n_classes, data.class_names)


def synth_gaussian(n_per_class: Sequence[int], means, stddev: float = 1.0, seed: int = 0,
                   name: str = "gaussian") -> Dataset:
    """Isotropic Gaussian blob per class; rows are grouped by class."""
    n = np.asarray(n_per_class, dtype=np.int64)
    mu = np.atleast_2d(np.asarray(means, dtype=float))
    if n.ndim != 1 or n.size < 2:
        raise DataError("need at least two classes")
    if mu.shape[0] != n.size:
        raise DataError(f"{n.size} class sizes but {mu.shape[0]} mean vectors")
    if np.any(n <= 0):
        raise DataError("every class needs at least one instance")
    if not stddev > 0:
        raise DataError("stddev must be positive")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n.size), n)
    X = mu[labels] + stddev * rng.standard_normal((labels.size, mu.shape[1]))
    schema = tuple(Column(f"x{j}") for j in range(mu.shape[1]))
    return validate_raw(Dataset(X, labels, schema, name, n.size))
