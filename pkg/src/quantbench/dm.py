"""Distribution-matching quantifiers and the solvers they share.

Every method here writes the test-side representation as a prevalence-weighted
mixture of class-conditional training representations and searches the
simplex for the weights that match best under some distance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .classifier import FittedScores, class_conditional_mean_scores, confusion_rates
from .core import PrevalenceEstimate, QuantificationError, binary_estimate, clip_to_unit, project_to_simplex
from .count import cc_from_predictions
from .dataset import Dataset

EPSILON = 1e-6
MAX_ITER = 1000


@dataclass(frozen=True, eq=False)
class MatchSystem:
    design: np.ndarray  # K x L, one column per class
    target: np.ndarray  # K

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.design, dtype=float))
        b = np.asarray(self.target, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise QuantificationError(f"design has {A.shape[0]} rows, target has {b.size}")
        if np.any(~np.isfinite(A)) or np.any(~np.isfinite(b)):
            raise QuantificationError("NaN or infinite entry in match system")
        object.__setattr__(self, "design", A)
        object.__setattr__(self, "target", b)

    @property
    def n_classes(self) -> int:
        return self.design.shape[1]


# --- simplex-constrained quadratic programs --------------------------------

def _qp_objective(H, c, x):
    return float(x @ H @ x - 2.0 * c @ x)


def simplex_qp(H, c) -> np.ndarray:
    """Minimize ``x'Hx - 2c'x`` over the probability simplex.

    ``H`` must be positive semidefinite on zero-sum directions. For up to 10
    classes every support set is tried: the equality-constrained problem on
    each support is solved through its KKT system and the best nonnegative
    candidate wins, ties going to the smallest norm. Larger problems use
    accelerated projected gradient.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    L = c.size
    if L == 1:
        return np.ones(1)
    if L > 10:
        return _qp_projected_gradient(H, c)
    best, best_f = None, np.inf
    scale = 1.0 + np.abs(H).max() + np.abs(c).max()
    for size in range(1, L + 1):
        for support in itertools.combinations(range(L), size):
            S = list(support)
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = H[np.ix_(S, S)]
            K[:size, size] = K[size, :size] = 1.0
            rhs = np.append(c[S], 1.0)
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            xs = sol[:size]
            if np.any(xs < -1e-12) or abs(xs.sum() - 1.0) > 1e-9:
                continue
            x = np.zeros(L)
            x[S] = np.maximum(xs, 0.0)
            x /= x.sum()
            f = _qp_objective(H, c, x)
            tol = 1e-12 * scale
            if f < best_f - tol or (f <= best_f + tol and x @ x < best @ best):
                best, best_f = x, f
    if best is None:
        return _qp_projected_gradient(H, c)
    return best


def _qp_projected_gradient(H, c, tol=1e-12, max_iter=100_000):
    L = c.size
    step = 1.0 / max(2.0 * np.linalg.norm(H, 2), 1e-12)
    x = np.full(L, 1.0 / L)
    y, t = x.copy(), 1.0
    for _ in range(max_iter):
        x_new = project_to_simplex(y - step * (2.0 * H @ y - 2.0 * c)).values
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + (t - 1.0) / t_new * (x_new - x)
        done = np.abs(x_new - x).sum() < tol
        x, t = x_new, t_new
        if done:
            break
    return x


def solve_simplex_least_squares(system: MatchSystem) -> PrevalenceEstimate:
    """Simplex-constrained least squares ``min ||design @ theta - target||^2``."""
    A, b = system.design, system.target
    theta = simplex_qp(A.T @ A, A.T @ b)
    flags = {"degenerate"} if np.linalg.matrix_rank(A) < A.shape[1] else set()
    return PrevalenceEstimate(theta, frozenset(flags))


# --- generic convex search over the simplex --------------------------------

def simplex_lattice(L: int, resolution: int) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of 1/resolution."""
    pts = [np.array(c + (resolution - sum(c),)) for c in
           itertools.product(range(resolution + 1), repeat=L - 1) if sum(c) <= resolution]
    return np.array(pts, dtype=float) / resolution


def golden_section(f, lo: float, hi: float, iters: int = 80) -> float:
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def minimize_on_simplex(f, grad, L: int, tol: float = 1e-10, max_iter: int = 20_000) -> tuple[np.ndarray, bool]:
    """Minimize a (quasi)convex objective over the simplex.

    Two classes: grid bracketing followed by golden-section search. More
    classes: best point of a coarse lattice, then projected gradient descent
    with backtracking. Returns ``(theta, converged)``.
    """
    if L == 2:
        grid = np.linspace(0.0, 1.0, 201)
        vals = np.array([f(np.array([a, 1 - a])) for a in grid])
        i = int(np.argmin(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        a = golden_section(lambda a: f(np.array([a, 1 - a])), lo, hi)
        cand = [a, grid[i]]
        a = min(cand, key=lambda a: f(np.array([a, 1 - a])))
        return np.array([a, 1 - a]), True
    resolution = {3: 30, 4: 12, 5: 8}.get(L, 2)
    lattice = simplex_lattice(L, resolution) if L <= 6 else np.full((1, L), 1.0 / L)
    x = min(lattice, key=f)
    x = 0.98 * x + 0.02 / L  # step off the boundary where gradients can blow up
    fx = f(x)
    step = 1.0
    for _ in range(max_iter):
        g = grad(x)
        while True:
            x_new = project_to_simplex(x - step * g).values
            f_new = f(x_new)
            if f_new <= fx + g @ (x_new - x) + (x_new - x) @ (x_new - x) / (2 * step) or step < 1e-14:
                break
            step *= 0.5
        moved = np.abs(x_new - x).sum()
        x, fx = x_new, f_new
        if moved < tol:
            return x, True
        step *= 2.0
    return x, False


# --- distances ---------------------------------------------------------------

def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise QuantificationError(f"histograms differ in length: {p.shape} vs {q.shape}")
    return p, q


def topsoe(p, q) -> float:
    p, q = _pair(p, q)
    m = p + q
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, p * np.log(2 * p / m), 0.0)
        b = np.where(q > 0, q * np.log(2 * q / m), 0.0)
    return float(max(np.sum(a + b), 0.0))


def hellinger(p, q) -> float:
    p, q = _pair(p, q)
    return float(np.sqrt(np.sum((np.sqrt(np.maximum(p, 0)) - np.sqrt(np.maximum(q, 0))) ** 2)))


def l1(p, q) -> float:
    p, q = _pair(p, q)
    return float(np.abs(p - q).sum())


# --- binned score histograms -------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinnedScoreHist:
    bin_count: int
    class_hists: np.ndarray  # L x bin_count, one simplex point per class
    test_hist: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.bin_count + 1)


def score_histogram(values, bins: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise QuantificationError("cannot build a histogram from no scores")
    # the 1e-9 keeps values sitting on an edge (e.g. rounded scores) in the upper bin
    idx = np.clip(np.floor(v * bins + 1e-9), 0, bins - 1).astype(np.int64)
    return np.bincount(idx, minlength=bins) / v.size


def binned_scores(scores: FittedScores, test_scores, bins: int, positive_class: int = 0,
                  decimals: int | None = None) -> BinnedScoreHist:
    if bins < 2:
        raise QuantificationError("need at least two bins")
    s = scores.oof_scores[:, positive_class]
    t = np.asarray(test_scores, dtype=float)
    t = t[:, positive_class] if t.ndim == 2 else t
    if decimals is not None:
        s, t = np.round(s, decimals), np.round(t, decimals)
    is_pos = scores.oof_labels == positive_class
    if is_pos.all() or not is_pos.any():
        raise QuantificationError("both the positive and the negative class must be present")
    pos, neg = score_histogram(s[is_pos], bins), score_histogram(s[~is_pos], bins)
    return BinnedScoreHist(bins, np.vstack([pos, neg]), score_histogram(t, bins))


def _l1_mixture_argmin(pos, neg, test) -> float:
    # the objective is convex and piecewise linear in alpha, so its minimum sits
    # on a breakpoint; a flat minimizing segment resolves to its midpoint
    d = pos - neg
    nz = d != 0
    cand = np.concatenate([[0.0, 1.0], (test[nz] - neg[nz]) / d[nz]])
    cand = np.unique(np.clip(cand, 0.0, 1.0))
    vals = np.abs(neg[None, :] + cand[:, None] * d[None, :] - test[None, :]).sum(axis=1)
    best = cand[vals <= vals.min() + 1e-12]
    return float(0.5 * (best.min() + best.max()))


def mixture_search_binary(hist: BinnedScoreHist, distance: str = "topsoe") -> float:
    """Weight alpha of the positive histogram in the best-matching mixture."""
    pos, neg = hist.class_hists[0], hist.class_hists[1]
    test = hist.test_hist
    if distance == "l1":
        return _l1_mixture_argmin(pos, neg, test)
    if distance != "topsoe":
        raise ValueError(f"unknown distance {distance!r}")
    # The objective is convex in alpha, so the bracket is shrunk on the sign of
    # its derivative sum_i d_i ln(2 m_i / (m_i + t_i)); comparing objective
    # values instead stalls near 1e-8 because the minimum is flat.
    d = pos - neg
    nz = d != 0

    def slope(a):
        m = neg[nz] + a * d[nz]
        t = test[nz]
        with np.errstate(divide="ignore", invalid="ignore"):
            # an empty bin on both sides contributes its limit ln 2
            r = np.where(m + t > 0, 2 * m / (m + t), 2.0)
            return float(np.sum(d[nz] * np.log(r)))

    lo, hi = 0.0, 1.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def dys(scores: FittedScores, test_features, bins: int = 10, positive_class: int = 0) -> PrevalenceEstimate:
    hist = binned_scores(scores, scores.predict_proba(test_features), bins, positive_class)
    return binary_estimate(mixture_search_binary(hist, "topsoe"), positive_class)


def fmm(scores: FittedScores, test_features, bins: int = 100, positive_class: int = 0,
        decimals: int = 2) -> PrevalenceEstimate:
    hist = binned_scores(scores, scores.predict_proba(test_features), bins, positive_class, decimals)
    return binary_estimate(mixture_search_binary(hist, "l1"), positive_class)


# --- linear systems from classifier outputs ----------------------------------

def gac_system(scores: FittedScores, test_features) -> MatchSystem:
    P = scores.predict_proba(test_features)
    return MatchSystem(confusion_rates(scores).matrix, cc_from_predictions(np.argmax(P, axis=1), P.shape[1]).values)


def gpac_system(scores: FittedScores, test_features) -> MatchSystem:
    return MatchSystem(class_conditional_mean_scores(scores), scores.predict_proba(test_features).mean(axis=0))


def fm_system(scores: FittedScores, test_features) -> MatchSystem:
    """Fractions of scores above the training prevalence of each class."""
    prior = scores.train_prevalence()
    L = scores.n_classes
    counts = np.bincount(scores.oof_labels, minlength=L)
    if np.any(counts == 0):
        raise QuantificationError(f"class {int(np.flatnonzero(counts == 0)[0])} absent from training")
    B = (scores.oof_scores > prior).astype(float)
    design = np.zeros((L, L))
    np.add.at(design.T, scores.oof_labels, B)
    design /= counts
    target = (scores.predict_proba(test_features) > prior).mean(axis=0)
    return MatchSystem(design, target)


def gac(scores: FittedScores, test_features) -> PrevalenceEstimate:
    return solve_simplex_least_squares(gac_system(scores, test_features))


def gpac(scores: FittedScores, test_features) -> PrevalenceEstimate:
    return solve_simplex_least_squares(gpac_system(scores, test_features))


def fm(scores: FittedScores, test_features) -> PrevalenceEstimate:
    return solve_simplex_least_squares(fm_system(scores, test_features))


# --- Hellinger matching ------------------------------------------------------

def hellinger_match(designs, targets) -> PrevalenceEstimate:
    """Minimize the summed Hellinger distance of several mixture systems.

    With one system the squared distance is minimized instead; it has the same
    minimizer and is smooth.
    """
    A = np.vstack(designs)
    t = np.concatenate(targets)
    sizes = [len(x) for x in targets]
    starts = np.cumsum([0] + sizes[:-1])
    single = len(sizes) == 1
    sqrt_t = np.sqrt(np.maximum(t, 0))
    L = A.shape[1]

    def parts(theta):
        m = np.maximum(A @ theta, 0.0)
        r = np.sqrt(m) - sqrt_t
        return m, r, np.add.reduceat(r * r, starts)

    def f(theta):
        _, _, h2 = parts(theta)
        return float(h2[0]) if single else float(np.sqrt(h2).sum())

    def grad(theta):
        m, r, h2 = parts(theta)
        dr = r / np.sqrt(np.maximum(m, 1e-300))  # d(r^2)/dm
        if single:
            return A.T @ dr
        scale = 0.5 / np.sqrt(np.maximum(h2, 1e-24))
        return A.T @ (dr * np.repeat(scale, sizes))

    theta, ok = minimize_on_simplex(f, grad, L)
    return PrevalenceEstimate(theta, frozenset() if ok else frozenset({"non_converged"}))


def hdy(scores: FittedScores, test_features) -> PrevalenceEstimate:
    system = gac_system(scores, test_features)
    return hellinger_match([system.design], [system.target])


def _require_binned(data_schema):
    for col in data_schema:
        if not col.is_categorical:
            raise QuantificationError(f"feature {col.name!r} is not binned")


def feature_histograms(train: Dataset, test_features) -> tuple[list, list]:
    """Per-feature class-conditional and test histograms over category codes."""
    _require_binned(train.schema)
    counts = train.class_counts()
    if np.any(counts == 0):
        raise QuantificationError(f"class {int(np.flatnonzero(counts == 0)[0])} absent from training")
    T = np.asarray(test_features)
    designs, targets = [], []
    for j, col in enumerate(train.schema):
        card = max(col.cardinality, int(T[:, j].max()) + 1 if T.size else 0)
        H = np.zeros((card, train.n_classes))
        np.add.at(H, (train.features[:, j].astype(np.int64), train.labels), 1.0)
        designs.append(H / counts)
        targets.append(np.bincount(T[:, j].astype(np.int64), minlength=card) / T.shape[0])
    return designs, targets


def hdx(train_binned: Dataset, test_binned) -> PrevalenceEstimate:
    designs, targets = feature_histograms(train_binned, test_binned)
    return hellinger_match(designs, targets)


# --- readme --------------------------------------------------------------------

def readme_subsets(n_features: int, cardinalities, subset_count: int = 50, subset_size: int | None = None,
                   seed: int = 0, cell_cap: int = 4096, max_redraws: int = 1000) -> list[np.ndarray]:
    """Pre-draw the feature subsets so results do not depend on evaluation order."""
    if subset_size is None:
        subset_size = int(math.floor(math.log2(n_features))) + 1
    if subset_size > n_features:
        raise QuantificationError(f"subset size {subset_size} exceeds {n_features} features")
    rng = np.random.default_rng(seed)
    card = np.asarray(cardinalities)
    out = []
    for _ in range(subset_count):
        for _ in range(max_redraws):
            s = np.sort(rng.choice(n_features, subset_size, replace=False))
            if np.prod(card[s].astype(float)) <= cell_cap:
                out.append(s)
                break
        else:
            raise QuantificationError(f"no feature subset with at most {cell_cap} joint cells")
    return out


def cell_system(train: Dataset, test_features, subset) -> MatchSystem:
    Xtr = train.features[:, subset]
    Xte = np.asarray(test_features)[:, subset]
    cells, inv = np.unique(np.vstack([Xtr, Xte]), axis=0, return_inverse=True)
    inv = inv.ravel()
    K = cells.shape[0]
    design = np.zeros((K, train.n_classes))
    np.add.at(design, (inv[: Xtr.shape[0]], train.labels), 1.0)
    design /= train.class_counts()
    target = np.bincount(inv[Xtr.shape[0]:], minlength=K) / Xte.shape[0]
    return MatchSystem(design, target)


def readme_solve(systems) -> PrevalenceEstimate:
    """Average the unconstrained least-squares solutions, then project."""
    thetas = [np.linalg.lstsq(s.design, s.target, rcond=None)[0] for s in systems]
    return project_to_simplex(np.mean(thetas, axis=0))


def readme(train_binned: Dataset, test_binned, subset_count: int = 50, subset_size: int | None = None,
           seed: int = 0, cell_cap: int = 4096) -> PrevalenceEstimate:
    _require_binned(train_binned.schema)
    if np.any(train_binned.class_counts() == 0):
        raise QuantificationError("every class must be present in training")
    subsets = readme_subsets(train_binned.n_features, [c.cardinality for c in train_binned.schema],
                             subset_count, subset_size, seed, cell_cap)
    return readme_solve([cell_system(train_binned, test_binned, s) for s in subsets])


# --- energy distance ---------------------------------------------------------

def mean_distance(A, B, chunk: int = 2048) -> float:
    """Mean Euclidean distance over all pairs (including identical pairs)."""
    total = 0.0
    for i in range(0, A.shape[0], chunk):
        total += cdist(A[i:i + chunk], B).sum()
    return total / (A.shape[0] * B.shape[0])


def energy_terms(train: Dataset, test_features) -> tuple[np.ndarray, np.ndarray]:
    """Class-to-class mean distances ``M`` and test-to-class mean distances ``b``."""
    L = train.n_classes
    groups = [train.features[train.labels == j] for j in range(L)]
    for j, g in enumerate(groups):
        if g.shape[0] == 0:
            raise QuantificationError(f"class {j} has no training instances")
    T = np.asarray(test_features, dtype=float)
    M = np.zeros((L, L))
    for j in range(L):
        for k in range(j, L):
            M[j, k] = M[k, j] = mean_distance(groups[j], groups[k])
    b = np.array([mean_distance(T, g) for g in groups])
    return M, b


def energy_solve(M, b) -> PrevalenceEstimate:
    """Minimize ``2 theta'b - theta'M theta`` (energy distance up to a constant)."""
    return PrevalenceEstimate(simplex_qp(-np.asarray(M), -np.asarray(b)))


def energy_distance_quantify(train: Dataset, test_features) -> PrevalenceEstimate:
    return energy_solve(*energy_terms(train, test_features))


# --- iterative methods -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IterState:
    estimate: np.ndarray
    iteration: int
    converged: bool
    last_step: float = 0.0


def em_iterate(test_scores, prior, epsilon: float = EPSILON, max_iter: int = MAX_ITER) -> IterState:
    """EM prior adjustment of posterior scores.

    Stops once an update moves the estimate by less than ``epsilon`` in L1;
    the iterate from which that final small step was taken is returned.
    """
    S = np.asarray(test_scores, dtype=float)
    prior = np.asarray(prior, dtype=float)
    active = prior > 0
    theta = prior.copy()
    for it in range(1, max_iter + 1):
        ratio = np.where(active, theta / np.where(active, prior, 1.0), 0.0)
        post = S * ratio
        norm = post.sum(axis=1, keepdims=True)
        post = np.divide(post, norm, out=np.zeros_like(post), where=norm > 0)
        new = post.mean(axis=0)
        if new.sum() > 0:
            new /= new.sum()
        step = float(np.abs(new - theta).sum())
        if step < epsilon:
            return IterState(theta, it - 1, True, step)
        theta = new
    return IterState(theta, max_iter, False, step)


def em_quantify(scores: FittedScores, test_features, epsilon: float = EPSILON,
                max_iter: int = MAX_ITER) -> PrevalenceEstimate:
    state = em_iterate(scores.predict_proba(test_features), scores.train_prevalence(), epsilon, max_iter)
    return PrevalenceEstimate(state.estimate, frozenset() if state.converged else frozenset({"non_converged"}))


def cde_threshold(train_pos: float, estimate: float) -> float:
    """Posterior threshold that is Bayes-optimal after shifting the prior to ``estimate``."""
    a = train_pos * (1.0 - estimate)
    b = (1.0 - train_pos) * estimate
    return a / (a + b) if a + b > 0 else 0.5


def cde_loop(scores: FittedScores, test_scores, positive_class: int = 0, epsilon: float = EPSILON,
             max_iter: int = MAX_ITER) -> IterState:
    if scores.n_classes != 2:
        raise QuantificationError("CDE iteration is binary only")
    s_train = scores.oof_scores[:, positive_class]
    is_pos = scores.oof_labels == positive_class
    if is_pos.all() or not is_pos.any():
        raise QuantificationError("both classes must be present in training")
    t = np.asarray(test_scores, dtype=float)
    s_test = t[:, positive_class] if t.ndim == 2 else t
    p_train = float(is_pos.mean())
    p = p_train
    for it in range(1, max_iter + 1):
        thr = cde_threshold(p_train, p)
        tpr = float(np.mean(s_train[is_pos] >= thr))
        fpr = float(np.mean(s_train[~is_pos] >= thr))
        ppos = float(np.mean(s_test >= thr))
        new = clip_to_unit((ppos - fpr) / (tpr - fpr)) if tpr != fpr else ppos
        step = abs(new - p)
        p = new
        if step < epsilon:
            return IterState(np.array([p]), it, True, step)
    return IterState(np.array([p]), max_iter, False, step)


def cde_iterate(scores: FittedScores, test_scores, positive_class: int = 0, epsilon: float = EPSILON,
                max_iter: int = MAX_ITER) -> PrevalenceEstimate:
    state = cde_loop(scores, test_scores, positive_class, epsilon, max_iter)
    return binary_estimate(float(state.estimate[0]), positive_class,
                           () if state.converged else ("non_converged",))


def cde(scores: FittedScores, test_features, positive_class: int = 0) -> PrevalenceEstimate:
    return cde_iterate(scores, scores.predict_proba(test_features), positive_class)
