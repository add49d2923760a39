import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fatigue_merf.forest import ForestParams, RandomForest, Tree, best_split, fit_forest


def brute_force_split(X, y, min_leaf=1):
    """All (feature, midpoint) pairs, scored by direct SSE arithmetic."""
    def sse(v):
        return float(((v - v.mean()) ** 2).sum()) if len(v) else 0.0

    parent = sse(y)
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = a + (b - a) / 2
            left = X[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            gain = parent - sse(y[left]) - sse(y[~left])
            if gain > 1e-9 * max(parent, 1) and (best is None or gain > best[2] + 1e-9 * parent):
                best = (f, thr, gain)
    return best


def small_forest(n_trees=1, **kw):
    return ForestParams(n_trees=n_trees, min_samples_leaf=1, bootstrap=False, **kw)


def test_best_split_example():
    f, thr, gain = best_split([[0], [1], [2], [3]], [0, 0, 10, 10])
    assert (f, thr) == (0, 1.5)
    assert gain == pytest.approx(100.0)


def test_best_split_none_cases():
    X = np.arange(12.0).reshape(6, 2)
    assert best_split(X, np.full(6, 3.0)) is None
    assert best_split(np.ones((6, 1)), np.arange(6.0)) is None


def test_best_split_ties_go_to_lowest_feature_and_threshold():
    X = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
    f, thr, _ = best_split(X, [0, 0, 10, 10])
    assert (f, thr) == (0, 1.5)
    # symmetric response: thresholds 0.5 and 2.5 give the same gain
    f, thr, gain = best_split(X[:, :1], [1, 0, 0, 1.0])
    assert thr == 0.5 and gain == pytest.approx(1 / 3)


def test_best_split_respects_rows_and_subset():
    X = np.array([[0, 5], [1, 4], [2, 3], [3, 2], [100, 1]], float)
    y = np.array([0, 0, 10, 10, -50.0])
    f, thr, gain = best_split(X, y, rows=[0, 1, 2, 3], features=[1])
    assert (f, thr) == (1, 3.5) and gain == pytest.approx(100.0)


def test_best_split_min_leaf():
    X = np.arange(6.0)[:, None]
    y = np.array([100, 0, 0, 0, 0, 0.0])
    assert best_split(X, y, min_samples_leaf=1)[1] == 0.5
    assert best_split(X, y, min_samples_leaf=2)[1] == 1.5


@given(st.integers(2, 30), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_depth1_tree_matches_brute_force(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, (n, p)).astype(float)
    y = rng.normal(0, 1, n).round(3)
    forest = fit_forest(X, y, ForestParams(n_trees=1, mtry=p, min_samples_leaf=1,
                                           max_depth=1, bootstrap=False))
    tree = forest.trees[0]
    want = brute_force_split(X, y)
    if want is None:
        assert tree.n_nodes == 1
    else:
        assert (tree.feature[0], tree.threshold[0]) == want[:2]
        assert tree.gain[0] == pytest.approx(want[2], rel=1e-9, abs=1e-9)


def test_constant_response_predicts_exactly():
    X = np.random.default_rng(0).normal(size=(40, 3))
    forest = fit_forest(X, np.full(40, 2.7), ForestParams(n_trees=5))
    assert np.all(forest.predict(X) == 2.7)
    assert np.all(forest.importance == 0)


def test_single_leaf_and_averaging():
    leaf = lambda v: Tree(*(np.array([x]) for x in (-1, 0.0, -1, -1, v, 0.0, 1)))
    forest = RandomForest(small_forest())
    forest.trees, forest.n_features, forest.offset = [leaf(4.2)], 2, 0.0
    forest._pack()
    assert forest.predict([0.0, 1.0]) == 4.2
    forest.trees = [leaf(1.0), leaf(3.0)]
    forest._pack()
    assert forest.predict([0.0, 1.0]) == 2.0


def test_out_of_range_inputs_are_routed():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, (50, 2))
    forest = fit_forest(X, X[:, 0], ForestParams(n_trees=5))
    out = forest.predict([[1e9, -1e9], [-1e9, 1e9]])
    assert np.all(np.isfinite(out))


def test_input_validation():
    with pytest.raises(ValueError):
        fit_forest([[1.0]], [1.0])
    with pytest.raises(ValueError):
        fit_forest([[1.0], [np.nan]], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_forest([[1.0], [2.0]], [1.0, np.inf])
    forest = fit_forest([[1.0], [2.0], [3.0]], [1.0, 2.0, 3.0], ForestParams(n_trees=2))
    with pytest.raises(ValueError):
        forest.predict([1.0, 2.0])
    with pytest.raises(ValueError):
        ForestParams(n_trees=0).validate()
    with pytest.raises(ValueError):
        ForestParams(mtry=5).resolved_mtry(3)


def test_importance_single_feature():
    rng = np.random.default_rng(2)
    X = np.zeros((30, 5))
    X[:, 3] = rng.normal(size=30)
    forest = fit_forest(X, X[:, 3] ** 2, ForestParams(n_trees=10))
    imp = forest.importance
    assert imp[3] == 1.0 and imp.sum() == 1.0 and np.count_nonzero(imp) == 1


@pytest.mark.parametrize("seed", range(1, 6))
def test_signal_feature_outranks_noise(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(200, 2))
    y = X[:, 0] + 0.3 * rng.normal(size=200)
    imp = fit_forest(X, y, ForestParams(n_trees=30, mtry=1, seed=seed)).importance
    assert imp[0] > imp[1]


@given(st.integers(0, 2**31), st.integers(5, 60))
def test_structural_invariants(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4)).round(2)
    y = rng.normal(size=n)
    forest = fit_forest(X, y, ForestParams(n_trees=4, min_samples_leaf=2, seed=seed))
    pred = forest.predict(rng.normal(0, 3, (20, 4)))
    assert np.all((pred >= y.min()) & (pred <= y.max()))
    imp = forest.importance
    assert len(imp) == 4 and np.all(imp >= 0)
    for t in forest.trees:
        internal = t.feature >= 0
        assert np.all(t.gain[internal] > 0)
        assert np.all((t.left[internal] > 0) & (t.right[internal] > 0))
        assert np.all(np.isfinite(t.value[~internal]))
    if any((t.feature >= 0).any() for t in forest.trees):
        assert imp.sum() == pytest.approx(1.0)


def test_determinism_and_thread_independence():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 8))
    y = X[:, 0] - X[:, 1] + rng.normal(size=120)
    prm = ForestParams(n_trees=12, seed=99)
    a = fit_forest(X, y, prm).dumps()
    assert fit_forest(X, y, prm).dumps() == a
    assert fit_forest(X, y, prm, threads=4).dumps() == a
    assert fit_forest(X, y, ForestParams(n_trees=12, seed=100)).dumps() != a


def test_trees_depend_only_on_seed_and_index():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 4))
    y = rng.normal(size=60)
    few = fit_forest(X, y, ForestParams(n_trees=3, seed=5))
    many = fit_forest(X, y, ForestParams(n_trees=7, seed=5))
    for a, b in zip(few.trees, many.trees):
        assert a.to_dict() == b.to_dict()


@given(st.integers(0, 2**31), st.integers(-1000, 1000))
def test_shift_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = rng.integers(-20, 20, 40).astype(float)
    prm = ForestParams(n_trees=5, seed=seed)
    a, b = fit_forest(X, y, prm), fit_forest(X, y + c, prm)
    assert np.array_equal(a.importance, b.importance)
    Xq = rng.normal(size=(30, 3))
    np.testing.assert_allclose(b.predict(Xq) - a.predict(Xq), c, rtol=0, atol=1e-12 * (abs(c) + 20))


def test_serialization_round_trip():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(80, 5))
    y = rng.normal(size=80)
    forest = fit_forest(X, y, ForestParams(n_trees=6, seed=1))
    text = forest.dumps()
    back = RandomForest.loads(text)
    assert back.dumps() == text
    assert np.array_equal(back.predict(X), forest.predict(X))
    doc = json.loads(text)
    assert doc["version"] == 1 and len(doc["importance"]) == 5
    doc["version"] = 2
    with pytest.raises(ValueError):
        RandomForest.from_dict(doc)
