import numpy as np
import pytest
from helpers import binary_rows, fitted, random_interior
from hypothesis import given, settings
from hypothesis import strategies as st

from quantbench import dm
from quantbench.classifier import cross_val_scores
from quantbench.core import QuantificationError
from quantbench.dataset import Column, Dataset, apply_preprocess, fit_preprocess, synth_gaussian
from quantbench.dm import BinnedScoreHist, MatchSystem
from quantbench.oracles import (lattice_points, oracle_hellinger, oracle_l1, oracle_mean_distance, oracle_mixture,
                                oracle_simplex_grid_minimize, oracle_topsoe)


def hist(pos, neg, test):
    return BinnedScoreHist(len(pos), np.array([pos, neg], dtype=float), np.array(test, dtype=float))


# --- simplex least squares ---------------------------------------------------

def test_lsq_identity():
    np.testing.assert_allclose(dm.solve_simplex_least_squares(MatchSystem(np.eye(2), [0.3, 0.7])).values, [0.3, 0.7])


def test_lsq_outside_cone_stays_on_simplex():
    est = dm.solve_simplex_least_squares(MatchSystem(np.eye(3), [2.0, -1.0, 0.5]))
    assert np.all(est.values >= 0) and abs(est.values.sum() - 1) < 1e-12
    np.testing.assert_allclose(est.values, [1.0, 0.0, 0.0], atol=1e-12)


def test_lsq_interior_exact():
    A = np.array([[1.0, 0.5], [0.0, 0.5]])
    np.testing.assert_allclose(dm.solve_simplex_least_squares(MatchSystem(A, [0.75, 0.25])).values, [0.5, 0.5])


def test_lsq_rejects_nan():
    with pytest.raises(QuantificationError):
        MatchSystem(np.eye(2), [np.nan, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 3), st.integers(2, 6))
def test_lsq_matches_grid_oracle(seed, L, K):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0, 1, (K, L))
    b = rng.uniform(0, 1, K)
    got = dm.solve_simplex_least_squares(MatchSystem(A, b)).values
    obj = lambda t: float(np.sum((A @ t - b) ** 2))
    ref = oracle_simplex_grid_minimize(obj, L, 60)
    # the exact solver can be no worse than any lattice point
    assert obj(got) <= obj(ref) + 1e-12


def test_simplex_qp_large_problem_falls_back():
    rng = np.random.default_rng(0)
    A = rng.uniform(size=(20, 12))
    theta = random_interior(12, rng, 0.01)
    np.testing.assert_allclose(dm.simplex_qp(A.T @ A, A.T @ (A @ theta)), theta, atol=1e-5)


# --- distances -----------------------------------------------------------------

def test_hellinger_examples():
    assert dm.hellinger([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert dm.hellinger([1, 0], [0, 1]) == pytest.approx(np.sqrt(2))
    assert dm.hellinger([0.5, 0.5], [0.25, 0.75]) == pytest.approx(oracle_hellinger([0.5, 0.5], [0.25, 0.75]))
    with pytest.raises(QuantificationError):
        dm.hellinger([1.0], [0.5, 0.5])


simplex_pairs = st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n), st.lists(st.floats(0, 1), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(simplex_pairs)
def test_distance_properties(pair):
    p, q = (np.asarray(v) for v in pair)
    if p.sum() == 0 or q.sum() == 0:
        return
    p, q = p / p.sum(), q / q.sum()
    for fn, oracle in ((dm.topsoe, oracle_topsoe), (dm.hellinger, oracle_hellinger), (dm.l1, oracle_l1)):
        assert fn(p, q) == pytest.approx(fn(q, p), abs=1e-12)
        assert fn(p, q) >= 0
        assert fn(p, p) <= 1e-12
        assert fn(p, q) == pytest.approx(oracle(p, q), abs=1e-12)
        if np.abs(p - q).max() > 1e-3:
            assert fn(p, q) > 1e-12


# --- binary mixture search -------------------------------------------------------

@pytest.mark.parametrize("distance", ["topsoe", "l1"])
def test_mixture_search_examples(distance):
    H = hist([0.8, 0.2], [0.2, 0.8], [0.5, 0.5])
    assert dm.mixture_search_binary(H, distance) == pytest.approx(0.5, abs=1e-9)
    H = hist([0.8, 0.2], [0.2, 0.8], [0.8, 0.2])
    assert dm.mixture_search_binary(H, distance) == pytest.approx(1.0, abs=1e-9)
    H = hist([0.8, 0.2], [0.2, 0.8], [0.35, 0.65])
    assert dm.mixture_search_binary(H, distance) == pytest.approx(0.25, abs=1e-9)


def test_oracle_topsoe_fixture():
    pos, neg, test = (0.8, 0.2), (0.2, 0.8), (0.35, 0.65)
    theta = oracle_simplex_grid_minimize(lambda t: oracle_topsoe(oracle_mixture(pos, neg, t[0]), test), 2, 200)
    assert theta[0] == pytest.approx(0.25)


def test_oracle_tie_rule_and_quadratic():
    first = next(lattice_points(3, 10))
    np.testing.assert_array_equal(oracle_simplex_grid_minimize(lambda t: 1.0, 3, 10), first)
    target = np.array([0.23, 0.41, 0.36])
    got = oracle_simplex_grid_minimize(lambda t: float(np.sum((t - target) ** 2)), 3, 20)
    np.testing.assert_allclose(got, [0.25, 0.4, 0.35])
    with pytest.raises(ValueError):
        oracle_simplex_grid_minimize(lambda t: 0.0, 5, 10)
    with pytest.raises(ValueError):
        oracle_simplex_grid_minimize(lambda t: 0.0, 2, 500)


def test_l1_flat_segment_resolves_to_midpoint():
    # identical class histograms make every alpha optimal
    assert dm.mixture_search_binary(hist([0.5, 0.5], [0.5, 0.5], [0.3, 0.7]), "l1") == 0.5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["topsoe", "l1"]))
def test_mixture_search_matches_alpha_grid(seed, distance):
    rng = np.random.default_rng(seed)
    b = int(rng.integers(3, 12))
    pos, neg, test = (rng.dirichlet(np.ones(b)) for _ in range(3))
    fn = oracle_topsoe if distance == "topsoe" else oracle_l1
    obj = lambda a: fn(oracle_mixture(pos, neg, a), test)
    got = dm.mixture_search_binary(hist(pos, neg, test), distance)
    grid_best = min(obj(a / 1000) for a in range(1001))
    assert obj(got) <= grid_best + 1e-9


def _score_pops(rng, n=4000):
    pos = np.clip(rng.beta(5, 2, n), 0, 1)
    neg = np.clip(rng.beta(2, 5, n), 0, 1)
    return pos, neg


@pytest.mark.parametrize("method,bins", [(dm.dys, 10), (dm.fmm, 100)])
def test_binned_methods_examples(method, bins):
    rng = np.random.default_rng(4)
    pos, neg = _score_pops(rng)
    s = fitted(binary_rows(np.r_[pos, neg]), [0] * pos.size + [1] * neg.size)
    # test histogram identical to the positive class histogram
    np.testing.assert_allclose(method(s, binary_rows(pos)).values, [1.0, 0.0], atol=1e-6)
    # both training populations together
    half = binary_rows(np.r_[pos, neg])
    np.testing.assert_allclose(method(s, half).values, [0.5, 0.5], atol=1e-6)
    # fresh draw from a 0.7 mixture
    pos2, neg2 = _score_pops(rng)
    test = binary_rows(np.r_[pos2[:2800], neg2[:1200]])
    assert method(s, test)[0] == pytest.approx(0.7, abs=0.03)


def test_score_histogram_edges():
    h = dm.score_histogram([0.0, 0.1, 0.1999, 0.2, 1.0], 10)
    np.testing.assert_allclose(h[[0, 1, 2, 9]], [0.2, 0.4, 0.2, 0.2])
    H = dm.binned_scores(fitted(binary_rows([0.9, 0.1]), [0, 1]), binary_rows([0.5]), 10)
    np.testing.assert_allclose(H.edges, np.linspace(0, 1, 11))
    assert np.allclose(H.class_hists.sum(axis=1), 1) and H.test_hist.sum() == pytest.approx(1)


# --- classifier-based systems --------------------------------------------------------

def test_gac_perfect_classifier():
    s = fitted(np.eye(3)[[0, 0, 1, 1, 2, 2]], [0, 0, 1, 1, 2, 2])
    test = np.eye(3)[[0, 1, 1, 1, 2]]
    np.testing.assert_allclose(dm.gac(s, test).values, [0.2, 0.6, 0.2], atol=1e-12)


def test_gac_train_prevalence_image(blobs3):
    s = cross_val_scores(blobs3)
    C = dm.gac_system(s, blobs3.features).design
    p = blobs3.prevalence()
    np.testing.assert_allclose(dm.solve_simplex_least_squares(MatchSystem(C, C @ p)).values, p, atol=1e-9)


def test_gpac_one_hot_equals_gac():
    labels = [0, 0, 0, 1, 1, 1]
    rows = np.eye(2)[[0, 0, 1, 1, 1, 0]]
    s = fitted(rows, labels)
    test = np.eye(2)[[0, 1, 1, 0, 1]]
    np.testing.assert_allclose(dm.gpac(s, test).values, dm.gac(s, test).values, atol=1e-12)


def test_gpac_uniform_scores_degenerate():
    s = fitted(np.full((6, 3), 1 / 3), [0, 1, 2, 0, 1, 2])
    est = dm.gpac(s, np.full((4, 3), 1 / 3))
    np.testing.assert_allclose(est.values, [1 / 3] * 3, atol=1e-12)
    assert "degenerate" in est.flags


def test_gpac_monte_carlo_mixture():
    rng = np.random.default_rng(9)
    pos, neg = _score_pops(rng)
    s = fitted(binary_rows(np.r_[pos, neg]), [0] * pos.size + [1] * neg.size)
    pos2, neg2 = _score_pops(rng)
    test = binary_rows(np.r_[pos2[:1200], neg2[:2800]])
    assert dm.gpac(s, test)[0] == pytest.approx(0.3, abs=0.05)


def test_hdy_identity_and_gac_agreement():
    s = fitted(np.eye(2)[[0, 0, 1, 1]], [0, 0, 1, 1])
    np.testing.assert_allclose(dm.hdy(s, np.eye(2)[[0, 1, 1, 1]]).values, [0.25, 0.75], atol=1e-6)
    rng = np.random.default_rng(1)
    pos, neg = _score_pops(rng, 500)
    s = fitted(binary_rows(np.r_[pos, neg]), [0] * 500 + [1] * 500)
    C = dm.gac_system(s, binary_rows(pos)).design
    theta = np.array([0.35, 0.65])
    sys_ = MatchSystem(C, C @ theta)
    np.testing.assert_allclose(dm.hellinger_match([sys_.design], [sys_.target]).values,
                               dm.solve_simplex_least_squares(sys_).values, atol=1e-4)


def test_fm_no_shift_returns_train_prevalence():
    rng = np.random.default_rng(5)
    data = synth_gaussian([3000, 2000], [[0, 0], [1.5, 1.0]], seed=2)
    s = cross_val_scores(data, folds=5)
    test = synth_gaussian([3000, 2000], [[0, 0], [1.5, 1.0]], seed=3)
    est = dm.fm(s, test.features)
    np.testing.assert_allclose(est.values, [0.6, 0.4], atol=0.03)
    del rng


def test_fm_one_hot_balanced_equals_gac():
    labels = [0, 0, 1, 1, 2, 2]
    rows = np.eye(3)[[0, 1, 1, 1, 2, 0]]
    s = fitted(rows, labels)
    test = np.eye(3)[[0, 1, 2, 2, 1, 1]]
    np.testing.assert_allclose(dm.fm_system(s, test).design, dm.gac_system(s, test).design)
    np.testing.assert_allclose(dm.fm(s, test).values, dm.gac(s, test).values, atol=1e-12)


# --- feature-based methods ----------------------------------------------------------

def binary_feature_data(x, y):
    return Dataset(np.asarray(x, float)[:, None], np.asarray(y), (Column("f", "categorical", 2),), "bin", 2)


def test_hdx_single_binary_feature():
    train = binary_feature_data([1] * 10 + [0] * 10, [0] * 10 + [1] * 10)
    test = np.array([[1]] * 3 + [[0]] * 7, dtype=float)
    np.testing.assert_allclose(dm.hdx(train, test).values, [0.3, 0.7], atol=1e-6)
    ref = oracle_simplex_grid_minimize(
        lambda t: oracle_hellinger(oracle_mixture([0, 1], [1, 0], t[0]), [0.7, 0.3]), 2, 200)
    assert ref[0] == pytest.approx(0.3)


def _binned(data, bins=5):
    plan = fit_preprocess(data, bin_continuous=True, bins_per_feature=bins)
    return plan, apply_preprocess(plan, data)


def test_hdx_train_marginals_and_feature_permutation(blobs3):
    _, b = _binned(blobs3)
    np.testing.assert_allclose(dm.hdx(b, b.features).values, blobs3.prevalence(), atol=1e-5)
    rng = np.random.default_rng(2)
    idx = rng.choice(blobs3.n_samples, 150, replace=False)
    perm = [1, 0]
    swapped = Dataset(b.features[:, perm], b.labels, tuple(b.schema[i] for i in perm), n_classes=3)
    np.testing.assert_allclose(dm.hdx(b, b.features[idx]).values,
                               dm.hdx(swapped, b.features[idx][:, perm]).values, atol=1e-9)


def test_hdx_rejects_unbinned(blobs2):
    with pytest.raises(QuantificationError):
        dm.hdx(blobs2, blobs2.features)


def test_readme_disjoint_support_exact():
    x = np.array([[0, 0]] * 6 + [[1, 1]] * 6 + [[2, 0]] * 6, dtype=float)
    schema = (Column("a", "categorical", 3), Column("b", "categorical", 2))
    train = Dataset(x, np.repeat([0, 1, 2], 6), schema, n_classes=3)
    test = np.array([[0, 0]] * 2 + [[1, 1]] * 5 + [[2, 0]] * 3, dtype=float)
    np.testing.assert_allclose(dm.readme(train, test, subset_count=5).values, [0.2, 0.5, 0.3], atol=1e-9)


def test_readme_deterministic_and_simplex(blobs3):
    _, b = _binned(blobs3)
    a = dm.readme(b, b.features[:100], seed=3)
    c = dm.readme(b, b.features[:100], seed=3)
    assert a.values.tobytes() == c.values.tobytes()
    assert np.all(a.values >= 0) and a.values.sum() == pytest.approx(1)


def test_readme_subset_rules():
    subsets = dm.readme_subsets(8, [3] * 8, subset_count=50, seed=1)
    assert len(subsets) == 50 and all(len(s) == 4 for s in subsets)
    # a cap of 9 cells forces subsets made of the two small features
    capped = dm.readme_subsets(4, [3, 3, 50, 50], subset_count=5, subset_size=2, seed=0, cell_cap=9)
    assert all(s.tolist() == [0, 1] for s in capped)
    with pytest.raises(QuantificationError):
        dm.readme_subsets(3, [50, 50, 50], subset_count=1, subset_size=2, cell_cap=9, max_redraws=20)


# --- energy distance ---------------------------------------------------------------

def _points(rng, L=2, n=15, d=2):
    X = np.vstack([rng.normal(3 * j, 1, (n, d)) for j in range(L)])
    return Dataset(X, np.repeat(np.arange(L), n), tuple(Column(f"x{i}") for i in range(d)), n_classes=L)


def test_energy_terms_match_oracle():
    rng = np.random.default_rng(0)
    train = _points(rng)
    test = rng.normal(1, 1, (7, 2))
    M, b = dm.energy_terms(train, test)
    A, B = train.features[:15], train.features[15:]
    assert M[0, 1] == pytest.approx(oracle_mean_distance(A, B))
    assert M[0, 0] == pytest.approx(oracle_mean_distance(A, A))
    assert b[1] == pytest.approx(oracle_mean_distance(test, B))


def test_energy_pure_class():
    rng = np.random.default_rng(1)
    train = _points(rng, L=3)
    est = dm.energy_distance_quantify(train, train.features[:15])
    np.testing.assert_allclose(est.values, [1, 0, 0], atol=1e-9)
    M, b = dm.energy_terms(train, train.features[:15])
    obj = lambda t: 2 * t @ b - t @ M @ t
    np.testing.assert_allclose(oracle_simplex_grid_minimize(obj, 3, 50), [1, 0, 0])


def test_energy_half_half_and_duplication():
    rng = np.random.default_rng(2)
    train = _points(rng)
    est = dm.energy_distance_quantify(train, train.features)
    np.testing.assert_allclose(est.values, [0.5, 0.5], atol=1e-3)
    test = rng.normal(1.0, 1.5, (20, 2))
    dup = Dataset(np.vstack([train.features, train.features]), np.r_[train.labels, train.labels], train.schema,
                  n_classes=2)
    np.testing.assert_allclose(dm.energy_distance_quantify(dup, test).values,
                               dm.energy_distance_quantify(train, test).values, atol=1e-12)


def test_energy_empty_class():
    d = Dataset(np.zeros((3, 1)), np.array([0, 0, 0]), (Column("x"),), n_classes=2)
    with pytest.raises(QuantificationError):
        dm.energy_terms(d, np.zeros((2, 1)))


# --- EM -----------------------------------------------------------------------------

def test_em_prior_rows_fixed_point():
    prior = np.array([0.2, 0.5, 0.3])
    state = dm.em_iterate(np.tile(prior, (50, 1)), prior)
    assert state.converged and state.iteration == 0
    np.testing.assert_array_equal(state.estimate, prior)


def test_em_one_hot_is_cc():
    S = np.eye(3)[[0, 0, 1, 2, 2, 2]]
    state = dm.em_iterate(S, np.array([1 / 3] * 3))
    assert state.iteration == 1
    np.testing.assert_allclose(state.estimate, [2 / 6, 1 / 6, 3 / 6])


def test_em_recovers_shift():
    train = synth_gaussian([4000, 1000], [[0.0], [2.0]], seed=1)
    test = synth_gaussian([1000, 4000], [[0.0], [2.0]], seed=2)
    s = cross_val_scores(train, folds=5)
    np.testing.assert_allclose(dm.em_quantify(s, test.features).values, [0.2, 0.8], atol=0.03)


def test_em_step_below_epsilon_when_converged():
    rng = np.random.default_rng(3)
    S = rng.dirichlet(np.ones(3), size=200)
    state = dm.em_iterate(S, np.array([0.5, 0.3, 0.2]))
    assert state.converged and state.last_step < dm.EPSILON and state.iteration <= dm.MAX_ITER
    capped = dm.em_iterate(S, np.array([0.5, 0.3, 0.2]), max_iter=2)
    assert not capped.converged and capped.iteration == 2


# --- CDE ----------------------------------------------------------------------------

def test_cde_threshold_rule():
    assert dm.cde_threshold(0.5, 0.5) == 0.5
    assert dm.cde_threshold(0.3, 0.3) == pytest.approx(0.5)
    assert dm.cde_threshold(0.5, 0.8) == pytest.approx(0.2)


def test_cde_separable_fast():
    rng = np.random.default_rng(0)
    s = fitted(binary_rows(np.r_[rng.uniform(0.7, 1, 50), rng.uniform(0, 0.3, 50)]), [0] * 50 + [1] * 50)
    test = np.r_[rng.uniform(0.7, 1, 12), rng.uniform(0, 0.3, 28)]
    state = dm.cde_loop(s, test)
    assert state.converged and state.iteration <= 2
    assert state.estimate[0] == pytest.approx(0.3)


def test_cde_no_shift():
    train = synth_gaussian([3000, 2000], [[0.0], [1.5]], seed=4)
    test = synth_gaussian([3000, 2000], [[0.0], [1.5]], seed=5)
    s = cross_val_scores(train, folds=5)
    assert dm.cde(s, test.features)[0] == pytest.approx(0.6, abs=0.02)


def test_cde_iterates_bounded_and_binary_only(blobs3):
    rng = np.random.default_rng(1)
    s = fitted(binary_rows(rng.uniform(0, 1, 60)), rng.integers(0, 2, 60))
    for m in (1, 2, 3, 5, 10):
        p = dm.cde_loop(s, rng.uniform(0, 1, 30), max_iter=m).estimate[0]
        assert 0 <= p <= 1
    with pytest.raises(QuantificationError):
        dm.cde_loop(fitted(np.full((3, 3), 1 / 3), [0, 1, 2]), np.full((2, 3), 1 / 3))
