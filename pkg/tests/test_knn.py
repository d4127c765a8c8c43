import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustrx.data import make_dataset, group_by_treatment
from robustrx.errors import DegeneratePairs, ShapeMismatch
from robustrx.knn import (
    KnnPredictor, apply_k_rule, fit_k_rule, nearest_indices, pairwise_distances, predict_knn,
    tune_k, weighted_distance,
)


def test_distance_examples():
    assert weighted_distance([1.0, 2.0], [1.0, 2.0], [3.0, 4.0]) == 0.0
    assert weighted_distance([1.0, 2.0], [0.0, 0.0], [1.0, 1.0]) == 5.0
    beta = np.array([1.0, 3.0])
    assert weighted_distance([1.0, 2.0], [0.0, 0.0], beta ** 2) == 37.0


def test_distance_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        weighted_distance([1.0, 2.0], [1.0], [1.0, 1.0])


@given(st.integers(0, 10**6))
def test_distance_symmetric_nonnegative_and_batched(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 6))
    Q, R = rng.normal(size=(4, p)), rng.normal(size=(7, p))
    w = rng.uniform(0, 3, p)
    D = pairwise_distances(Q, R, w)
    for i in range(4):
        for j in range(7):
            assert D[i, j] == pytest.approx(weighted_distance(Q[i], R[j], w), rel=1e-12)
            assert weighted_distance(Q[i], R[j], w) == weighted_distance(R[j], Q[i], w) >= 0


def _brute_knn(x, X, y, w, k):
    d = [(weighted_distance(x, X[i], w), i) for i in range(len(y))]
    d.sort()
    return np.mean([y[i] for _, i in d[:k]])


def test_k1_and_kN():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 2))
    y = rng.normal(size=6)
    w = np.array([1.0, 2.0])
    assert predict_knn(X[3] + 1e-9, KnnPredictor(w, X, y, 1)) == y[3]
    assert predict_knn(rng.normal(size=2), KnnPredictor(w, X, y, 6)) == pytest.approx(y.mean())


@pytest.mark.parametrize("seed", range(10))
def test_matches_full_sort_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 3, size=(5, 2)).astype(float)  # many exact ties
    y = rng.normal(size=5)
    w = rng.choice([0.0, 1.0, 4.0], size=2)
    q = rng.integers(0, 3, size=2).astype(float)
    assert predict_knn(q, KnnPredictor(w, X, y, 2)) == pytest.approx(_brute_knn(q, X, y, w, 2), abs=1e-15)


@given(st.integers(0, 10**6), st.integers(1, 12))
def test_prediction_within_outcome_range(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    pred = KnnPredictor(rng.uniform(0, 2, 3), X, y, k).predict(rng.normal(size=(5, 3)))
    assert np.all(pred >= y.min() - 1e-12) and np.all(pred <= y.max() + 1e-12)


def test_zero_weights_take_lowest_index_members():
    X = np.random.default_rng(1).normal(size=(8, 2))
    y = np.arange(8.0)
    assert predict_knn([5.0, 5.0], KnnPredictor(np.zeros(2), X, y, 3)) == 1.0


@given(st.integers(0, 10**6), st.floats(0.1, 10))
def test_scaling_beta_leaves_neighbors_unchanged(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    beta = rng.normal(size=3)
    Q = rng.normal(size=(4, 3))
    a = KnnPredictor.from_coefficients(beta, X, y, 3)
    b = KnnPredictor.from_coefficients(c * beta, X, y, 3)
    np.testing.assert_allclose(pairwise_distances(Q, X, b.weights), c * c * pairwise_distances(Q, X, a.weights),
                               rtol=1e-10)
    np.testing.assert_array_equal(nearest_indices(Q, X, a.weights, 3), nearest_indices(Q, X, b.weights, 3))


@given(st.integers(0, 10**6))
def test_ranking_invariant_under_sqrt(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    w = rng.uniform(0, 2, 2)
    q = rng.normal(size=(1, 2))
    D = pairwise_distances(q, X, w)[0]
    assert list(np.argsort(D, kind="stable")) == list(np.argsort(np.sqrt(D), kind="stable"))


def test_predictor_validation_and_group_constructor():
    X = np.ones((3, 2))
    with pytest.raises(ValueError):
        KnnPredictor(np.array([-1.0, 1.0]), X, np.ones(3), 1)
    with pytest.raises(ValueError):
        KnnPredictor(np.ones(2), X, np.ones(3), 4)
    ds = make_dataset(["a", "b", "c"], [[1.0, 0.0], [2.0, 1.0], [3.0, 5.0]], [0, 1, 0], [1.0, 2.0, 3.0],
                      ["x", "z"], ["A", "B"], 0)
    g = group_by_treatment(ds)[0]
    p = KnnPredictor.from_group(g, np.array([1.0, 2.0, 9.0]), 1)  # trailing intercept ignored
    np.testing.assert_array_equal(p.weights, [1.0, 4.0])
    assert p.group == 0 and predict_knn([3.0, 5.0], p) == 3.0


def test_k_rule_two_points():
    a, b = fit_k_rule([(100, 10), (400, 20)])
    assert a == pytest.approx(0.0, abs=1e-12) and b == pytest.approx(1.0, abs=1e-12)
    assert apply_k_rule((a, b), 900) == 30
    assert apply_k_rule((-50.0, 0.0), 10) == 1
    assert apply_k_rule((0.0, 10.0), 4) == 4


def test_k_rule_degenerate():
    with pytest.raises(DegeneratePairs):
        fit_k_rule([(100, 10), (100, 12)])
    with pytest.raises(DegeneratePairs):
        fit_k_rule([(100, 10)])


def test_k_rule_matches_normal_equations():
    rng = np.random.default_rng(2)
    n = rng.integers(50, 3000, 5).astype(float)
    k = np.round(0.5 * np.sqrt(n) + rng.normal(size=5) + 3)
    a, b = fit_k_rule(list(zip(n, k)))
    s = np.sqrt(n)
    # closed-form simple regression
    b_ref = np.sum((s - s.mean()) * (k - k.mean())) / np.sum((s - s.mean()) ** 2)
    a_ref = k.mean() - b_ref * s.mean()
    assert a == pytest.approx(a_ref, abs=1e-8) and b == pytest.approx(b_ref, abs=1e-8)


def test_tune_k_singleton_and_determinism():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 2))
    y = rng.normal(size=40)
    assert tune_k(X, y, np.ones(2), [7]) == 7
    assert tune_k(X, y, np.ones(2), seed=5) == tune_k(X, y, np.ones(2), seed=5)


def test_tune_k_caps_grid_by_fold_size():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(10, 1))
    y = rng.normal(size=10)
    # fold-train size is 8, so larger grid values are dropped or clamped
    assert tune_k(X, y, np.ones(1), [100], folds=5) == 8
    assert tune_k(X, y, np.ones(1), [3, 50], folds=5) == 3
    assert tune_k(X, y, np.ones(1), [8, 9, 50], folds=5) == 8


def test_tune_k_noise_prefers_averaging():
    wins = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = 30
        X = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        max_k = n - int(np.ceil(n / 5))
        wins += tune_k(X, y, np.ones(2), [1, max_k], folds=5, seed=seed) == max_k
    assert wins > 25


def test_tune_k_matches_direct_cv():
    from robustrx.cv import kfold_indices

    rng = np.random.default_rng(6)
    X = rng.normal(size=(35, 2))
    y = X[:, 0] ** 2 + 0.3 * rng.normal(size=35)
    w = np.array([1.0, 0.1])
    grid = [1, 2, 3, 5, 8]
    errs = []
    for k in grid:
        e = []
        for te in kfold_indices(35, 5, 8):
            tr = np.setdiff1d(np.arange(35), te)
            e.append(np.mean(np.abs(y[te] - KnnPredictor(w, X[tr], y[tr], k).predict(X[te]))))
        errs.append(np.mean(e))
    assert tune_k(X, y, w, grid, 5, 8) == grid[int(np.argmin(errs))]
