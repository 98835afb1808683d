"""Prevalence vectors and simplex utilities shared by every quantifier."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class QuantificationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PrevalenceEstimate:
    """A point on the probability simplex plus diagnostic flags.

    Flags used across the package: ``clipped``, ``degenerate``, ``fallback``,
    ``non_converged``.
    """

    values: np.ndarray
    flags: frozenset = frozenset()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any(~np.isfinite(v)):
            raise QuantificationError(f"invalid prevalence vector {v}")
        v = np.maximum(v, 0.0)
        if not v.sum() > 0:
            raise QuantificationError("prevalence vector has no mass")
        v = v / v.sum()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def with_flags(self, *flags) -> "PrevalenceEstimate":
        return PrevalenceEstimate(self.values, self.flags | set(flags))


def binary_estimate(positive: float, positive_class: int = 0, flags=()) -> PrevalenceEstimate:
    v = np.empty(2)
    v[positive_class] = positive
    v[1 - positive_class] = 1.0 - positive
    return PrevalenceEstimate(v, frozenset(flags))


def clip_to_unit(raw: float) -> float:
    if math.isnan(raw):
        raise QuantificationError("cannot clip NaN")
    return min(max(float(raw), 0.0), 1.0)


def project_to_simplex(raw) -> PrevalenceEstimate:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(raw, dtype=float)
    if np.any(np.isnan(v)):
        raise QuantificationError("cannot project NaN entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    tau = css[rho - 1] / rho
    return PrevalenceEstimate(np.maximum(v - tau, 0.0))


def ovr_combine(per_class) -> PrevalenceEstimate:
    """Normalize one-vs-rest positive prevalences; all zeros give the uniform vector."""
    p = np.asarray(per_class, dtype=float)
    total = p.sum()
    if total <= 0:
        return PrevalenceEstimate(np.full(p.size, 1.0 / p.size), frozenset({"fallback"}))
    return PrevalenceEstimate(p / total)
