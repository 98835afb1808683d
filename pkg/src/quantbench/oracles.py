"""Brute-force reference computations and golden fixture generation.

Everything here is deliberately naive (loops, exhaustive lattices, closed
forms) and is never called from the production code paths; the tests use it
to cross-check the fast implementations.
"""

from __future__ import annotations

import csv
import itertools
import math
from pathlib import Path

import numpy as np

MAX_ORACLE_CLASSES = 4
MAX_ORACLE_RESOLUTION = 200


def lattice_points(L: int, resolution: int):
    """Simplex lattice with step 1/resolution in a fixed enumeration order.

    The first L-1 coordinates run lexicographically upward; the last one takes
    the remainder, so the first point is (0, ..., 0, 1).
    """
    for head in itertools.product(range(resolution + 1), repeat=L - 1):
        s = sum(head)
        if s <= resolution:
            yield tuple(h / resolution for h in head) + ((resolution - s) / resolution,)


def oracle_simplex_grid_minimize(objective, L: int, resolution: int = 100) -> np.ndarray:
    """Lattice argmin of ``objective``; ties keep the earliest lattice point."""
    if not 2 <= L <= MAX_ORACLE_CLASSES:
        raise ValueError(f"oracle supports 2..{MAX_ORACLE_CLASSES} classes, got {L}")
    if not 1 <= resolution <= MAX_ORACLE_RESOLUTION:
        raise ValueError(f"resolution must be in 1..{MAX_ORACLE_RESOLUTION}")
    best, best_val = None, math.inf
    for pt in lattice_points(L, resolution):
        v = objective(np.array(pt))
        if v < best_val:
            best, best_val = pt, v
    return np.array(best)


def oracle_cc_expectation(p: float, tpr: float, fpr: float) -> float:
    return p * tpr + (1 - p) * fpr


def oracle_projection(v, resolution: int = 200) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return oracle_simplex_grid_minimize(lambda x: float(sum((a - b) ** 2 for a, b in zip(x, v))), v.size, resolution)


def oracle_topsoe(p, q) -> float:
    total = 0.0
    for a, b in zip(p, q):
        m = (a + b) / 2
        if a > 0:
            total += a * math.log(a / m)
        if b > 0:
            total += b * math.log(b / m)
    return total


def oracle_hellinger(p, q) -> float:
    return math.sqrt(sum((math.sqrt(a) - math.sqrt(b)) ** 2 for a, b in zip(p, q)))


def oracle_l1(p, q) -> float:
    return sum(abs(a - b) for a, b in zip(p, q))


def oracle_mixture(pos, neg, alpha):
    return [alpha * a + (1 - alpha) * b for a, b in zip(pos, neg)]


def oracle_nkld(p, theta, epsilon: float = 1e-8) -> float:
    L = len(p)
    ps = [(v + epsilon) / (1 + L * epsilon) for v in p]
    ts = [(v + epsilon) / (1 + L * epsilon) for v in theta]
    kld = sum(a * math.log(a / b) for a, b in zip(ps, ts))
    e = math.exp(kld)
    return 2 * e / (1 + e) - 1


def oracle_ranks(errors) -> np.ndarray:
    """Midranks by counting: 1 + (#smaller) + (#equal others) / 2."""
    E = np.asarray(errors, dtype=float)
    R = np.empty_like(E)
    for i, row in enumerate(E):
        for j, x in enumerate(row):
            less = sum(1 for y in row if y < x)
            eq = sum(1 for y in row if y == x) - 1
            R[i, j] = 1 + less + eq / 2
    return R


def oracle_friedman(ranks) -> float:
    """Friedman statistic in its rank-sum form."""
    R = np.asarray(ranks, dtype=float)
    n, k = R.shape
    sums = R.sum(axis=0)
    return 12.0 / (n * k * (k + 1)) * float(sum(s * s for s in sums)) - 3.0 * n * (k + 1)


def oracle_mean_distance(A, B) -> float:
    total, count = 0.0, 0
    for a in A:
        for b in B:
            total += math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
            count += 1
    return total / count


def oracle_knn_labels(train_X, train_y, test_X, k: int, weights) -> list[int]:
    """Weighted k-NN votes; distance ties keep the lower training index, vote ties the lower class."""
    out = []
    for t in test_X:
        d = [(math.dist(t, x), i) for i, x in enumerate(train_X)]
        d.sort()
        votes = [0.0] * len(weights)
        for _, i in d[:k]:
            votes[int(train_y[i])] += weights[int(train_y[i])]
        out.append(max(range(len(votes)), key=lambda c: (votes[c], -c)))
    return out


def finite_difference_grad(f, w, h: float = 1e-6) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e.flat[i] = h
        g.flat[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


# --- golden fixtures -------------------------------------------------------------

FIXTURE_FILES = ("mixture_alpha.csv", "simplex_projection.csv", "cc_expectation.csv", "energy_grid.csv")


def _fmt(v) -> str:
    return ";".join(repr(float(x)) for x in v)


def _mixture_cases():
    cases = [((0.8, 0.2), (0.2, 0.8), (0.35, 0.65))]
    rng = np.random.default_rng(20240)
    for _ in range(6):
        b = int(rng.integers(3, 8))
        pos, neg = rng.dirichlet(np.ones(b)), rng.dirichlet(np.ones(b))
        alpha = round(float(rng.uniform(0.05, 0.95)), 2)
        noise = rng.dirichlet(np.ones(b)) * 0.1
        test = (np.array(oracle_mixture(pos, neg, alpha)) * 0.9 + noise * (rng.uniform() < 0.5))
        cases.append((tuple(pos), tuple(neg), tuple(test / test.sum())))
    return cases


def _write(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def regenerate_fixtures(out_dir) -> list[Path]:
    """Recompute every oracle output and write the golden CSV fixtures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = MAX_ORACLE_RESOLUTION
    dist_fns = {"topsoe": oracle_topsoe, "hellinger": oracle_hellinger, "l1": oracle_l1}

    rows = []
    for case, (pos, neg, test) in enumerate(_mixture_cases()):
        for name, fn in dist_fns.items():
            theta = oracle_simplex_grid_minimize(lambda t: fn(oracle_mixture(pos, neg, t[0]), test), 2, res)
            rows.append([case, name, _fmt(pos), _fmt(neg), _fmt(test), repr(float(theta[0]))])
    _write(out / FIXTURE_FILES[0], ["case", "distance", "pos_hist", "neg_hist", "test_hist", "alpha"], rows)

    rng = np.random.default_rng(7)
    vectors = [(1.2, -0.2), (0.3, 0.3, 0.4), (0.5, 0.5, 0.5), (-1.0, 2.0, 0.1)]
    vectors += [tuple(np.round(rng.normal(0.3, 0.6, size=L), 3)) for L in (2, 3, 3, 4)]
    rows = [[_fmt(v), _fmt(oracle_projection(v, res if len(v) <= 3 else 40))] for v in vectors]
    _write(out / FIXTURE_FILES[1], ["vector", "projection"], rows)

    rows = [[p, tpr, fpr, repr(oracle_cc_expectation(p, tpr, fpr))]
            for p, tpr, fpr in [(0.5, 0.8, 0.2), (0.0, 0.9, 0.1), (1.0, 0.9, 0.1), (0.3, 0.7, 0.25)]]
    _write(out / FIXTURE_FILES[2], ["p", "tpr", "fpr", "ppos"], rows)

    # Energy objective on small point clouds; test points are a 30/70 mix of the classes.
    rng = np.random.default_rng(11)
    A = rng.normal(0.0, 1.0, size=(10, 2))
    B = rng.normal(2.5, 1.0, size=(10, 2))
    T = np.vstack([A[:3], B[:7]])
    M = [[oracle_mean_distance(X, Y) for Y in (A, B)] for X in (A, B)]
    b = [oracle_mean_distance(T, X) for X in (A, B)]
    theta = oracle_simplex_grid_minimize(
        lambda t: 2 * sum(t[j] * b[j] for j in range(2)) - sum(t[j] * t[k] * M[j][k] for j in range(2) for k in range(2)),
        2, res)
    _write(out / FIXTURE_FILES[3], ["train_a", "train_b", "test", "m", "b", "theta"],
           [[_fmt(A.ravel()), _fmt(B.ravel()), _fmt(T.ravel()), _fmt(np.ravel(M)), _fmt(b), _fmt(theta)]])
    return [out / f for f in FIXTURE_FILES]
