"""Quantification error measures and Friedman/Nemenyi rank statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, rankdata

# Studentized range quantiles for infinite degrees of freedom divided by sqrt(2),
# indexed by the number of compared methods k = 2..30.
_Q_ALPHA = {
    0.05: (1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684,
           3.218654, 3.268004, 3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073,
           3.543799, 3.569040, 3.592946, 3.615646, 3.637252, 3.657861, 3.677556, 3.696413, 3.714498,
           3.731869, 3.748578),
    0.10: (1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889,
           2.977768, 3.029694, 3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224,
           3.319233, 3.345676, 3.370712, 3.394477, 3.417089, 3.438651, 3.459253, 3.478971, 3.497878,
           3.516033, 3.533492),
}


def _pair(p, theta):
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if p.shape != theta.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {theta.shape}")
    return p, theta


def ae(p, theta) -> float:
    """Absolute error: L1 distance between true and estimated distributions, in [0, 2]."""
    p, theta = _pair(p, theta)
    return float(np.abs(p - theta).sum())


def nkld(p, theta, epsilon: float = 1e-8) -> float:
    """Normalized KL divergence ``2 e^KLD / (1 + e^KLD) - 1`` of smoothed distributions."""
    p, theta = _pair(p, theta)
    L = p.size
    ps = (p + epsilon) / (1 + L * epsilon)
    ts = (theta + epsilon) / (1 + L * epsilon)
    kld = max(float(np.sum(ps * np.log(ps / ts))), 0.0)
    # 2 e^x / (1 + e^x) - 1 == tanh(x / 2), which does not overflow
    return float(np.tanh(kld / 2))


def rank_methods(errors) -> np.ndarray:
    """Rank methods within each dataset row, 1 = lowest error, ties get midranks."""
    E = np.asarray(errors, dtype=float)
    if E.ndim != 2:
        raise ValueError("errors must be a datasets x methods matrix")
    if np.any(np.isnan(E)):
        raise ValueError("NaN in error matrix")
    return rankdata(E, method="average", axis=1)


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p_value: float
    critical_value: float
    rejected: bool


def friedman_test(ranks, alpha: float = 0.05) -> FriedmanResult:
    R = np.asarray(ranks, dtype=float)
    if R.ndim != 2 or R.shape[0] < 2 or R.shape[1] < 2:
        raise ValueError("Friedman test needs at least 2 datasets and 2 methods")
    n, k = R.shape
    avg = R.mean(axis=0)
    stat = 12.0 * n / (k * (k + 1)) * (float(np.sum(avg ** 2)) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)
    crit = float(chi2.ppf(1 - alpha, k - 1))
    return FriedmanResult(stat, float(chi2.sf(stat, k - 1)), crit, stat > crit)


def nemenyi_q(k: int, alpha: float = 0.05) -> float:
    if alpha not in _Q_ALPHA:
        raise ValueError("alpha must be 0.05 or 0.1")
    if not 2 <= k <= 30:
        raise ValueError(f"no tabulated Nemenyi quantile for k={k} (supported: 2..30)")
    return _Q_ALPHA[alpha][k - 2]


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """Critical difference of average ranks for k methods over n datasets."""
    if n < 1:
        raise ValueError("need at least one dataset")
    return nemenyi_q(k, alpha) * np.sqrt(k * (k + 1) / (6.0 * n))


def significance_groups(avg_ranks, cd: float) -> list[list[int]]:
    """Maximal runs of methods (ordered by rank) whose rank spread is below ``cd``.

    Groups are lists of method indices into ``avg_ranks``; a method that is
    distinguishable from all others forms a group of its own.
    """
    if not cd > 0:
        raise ValueError("cd must be positive")
    r = np.asarray(avg_ranks, dtype=float)
    order = np.argsort(r, kind="stable")
    sr = r[order]
    groups, last_end = [], -1
    for i in range(sr.size):
        j = i
        while j + 1 < sr.size and sr[j + 1] - sr[i] < cd:
            j += 1
        if j > last_end:
            groups.append(order[i:j + 1].tolist())
            last_end = j
    return groups


@dataclass(frozen=True, eq=False)
class RankReport:
    datasets: list
    methods: list
    mean_errors: np.ndarray
    ranks: np.ndarray
    average_ranks: np.ndarray
    friedman_statistic: float
    friedman_p_threshold_passed: bool
    critical_difference: float
    metric: str = "ae"

    def groups(self) -> list[list[str]]:
        if not self.critical_difference > 0:
            return [[m] for m in self.methods]
        return [[self.methods[i] for i in g] for g in significance_groups(self.average_ranks, self.critical_difference)]


def rank_report(errors, datasets, methods, metric: str = "ae", alpha: float = 0.05) -> RankReport:
    E = np.asarray(errors, dtype=float)
    R = rank_methods(E)
    n, k = R.shape
    if n >= 2 and k >= 2:
        fr = friedman_test(R, alpha)
        stat, passed = fr.statistic, fr.rejected
    else:
        stat, passed = float("nan"), False
    cd = nemenyi_cd(k, n, alpha) if 2 <= k <= 30 and n >= 1 else float("nan")
    return RankReport(list(datasets), list(methods), E, R, R.mean(axis=0), stat, passed, cd, metric)
