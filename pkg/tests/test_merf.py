import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fatigue_merf.forest import ForestParams, fit_forest
from fatigue_merf.ingest import SubjectRecord
from fatigue_merf.merf import (
    VARIANCE_FLOOR, ClusterMode, ClusterScheme, MerfModel, MerfParams, assign_clusters,
    estep, fit_merf, gll, predict_merf, update_variance,
)
from fatigue_merf.synth import SynthSpec, gen_clustered
from oracles import dense_blup, dense_gll, dense_variance, random_mixed_instance

SMALL_FOREST = ForestParams(n_trees=10, seed=3)


# ---------------------------------------------------------------- clustering

def test_three_ages_three_bins():
    scheme = ClusterScheme(ClusterMode.AGE, 3).fit([25, 40, 60], [20, 20, 20])
    assert sorted({scheme.assign(a, 20) for a in (25, 40, 60)}) == [0, 1, 2]


def test_single_bin_and_joint_ids():
    rng = np.random.default_rng(0)
    ages, bmis = rng.uniform(20, 80, 30), rng.uniform(18, 35, 30)
    one = ClusterScheme(ClusterMode.AGE, 1).fit(ages, bmis)
    assert {one.assign(a, b) for a, b in zip(ages, bmis)} == {0}
    joint = ClusterScheme(ClusterMode.AGE_AND_BMI, 3).fit(ages, bmis)
    ids = {joint.assign(a, b) for a, b in zip(ages, bmis)}
    assert ids <= set(range(9)) and len(ids) > 3
    assert joint.assign(-100, 1000) == 0 * 3 + 2 and joint.assign(1000, -5) == 2 * 3 + 0


def test_assign_clusters_and_missing_demographics():
    subjects = {"a": SubjectRecord("a", 30, 22.0), "b": SubjectRecord("b", 60, 31.0)}
    scheme = ClusterScheme(ClusterMode.BMI, 2).fit([30, 60], [22.0, 31.0])
    assert assign_clusters(subjects, scheme) == {"a": 0, "b": 1}
    with pytest.raises(ValueError, match="'c'"):
        assign_clusters({"c": SubjectRecord("c", 40, float("nan"))}, scheme)


# ---------------------------------------------------------------- E-step, variances, GLL

def test_estep_examples():
    assert estep([1, 1], [0, 0], 1.0, 1.0)[0] == pytest.approx(2 / 3, abs=1e-15)
    assert estep([3, -1, 2], [0, 1, 1], 1.0, 0.0) == {0: 0.0, 1: 0.0}
    bs = [estep(np.ones(n), np.zeros(n, int), 1.0, 1.0)[0] for n in (1, 10, 1000)]
    assert bs[0] < bs[1] < bs[2] < 1 and bs[2] > 0.998


def test_estep_omits_empty_clusters():
    assert set(estep([1.0, 2.0], [4, 7], 1.0, 1.0)) == {4, 7}


def test_update_variance_examples():
    s2, sb2 = update_variance(np.zeros(4), {0: 0.0, 1: 0.0}, [0, 0, 1, 1], 1.0, 0.0)
    assert s2 == VARIANCE_FLOOR and sb2 == 0.0


def test_gll_examples():
    assert gll([0.0], {0: 0.0}, [0], 1.0, 1.0) == 0.0
    r = np.array([1.0, -2.0, 0.5])
    a = gll(r, {0: 0.1}, [0, 0, 0], 1.5, 0.7)
    b = gll(r * math.sqrt(2), {0: 0.1 * math.sqrt(2)}, [0, 0, 0], 1.5, 0.7)
    assert b > a
    # dropped intercept terms when sigma_b2 = 0
    assert gll(r, {0: 0.0}, [0, 0, 0], 2.0, 0.0) == pytest.approx(np.sum(r ** 2) / 2 + 3 * math.log(2))


def test_dense_oracles_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(200):
        r, clusters, s2, sb2 = random_mixed_instance(rng)
        b = estep(r, clusters, s2, sb2)
        want = dense_blup(r, clusters, s2, sb2)
        for k in want:
            assert b[k] == pytest.approx(want[k], abs=1e-10)
        got = update_variance(r, b, clusters, s2, sb2)
        np.testing.assert_allclose(got, dense_variance(r, b, clusters, s2, sb2), rtol=0, atol=1e-10)
        assert gll(r, b, clusters, s2, sb2) == pytest.approx(dense_gll(r, b, clusters, s2, sb2),
                                                            abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    r, clusters, s2, sb2 = random_mixed_instance(rng)
    perm = rng.permutation(len(r))
    b1, b2 = estep(r, clusters, s2, sb2), estep(r[perm], clusters[perm], s2, sb2)
    for k in b1:
        assert b1[k] == pytest.approx(b2[k], abs=1e-12)
    np.testing.assert_allclose(update_variance(r, b1, clusters, s2, sb2),
                               update_variance(r[perm], b1, clusters[perm], s2, sb2), atol=1e-12)
    assert gll(r, b1, clusters, s2, sb2) == pytest.approx(
        gll(r[perm], b1, clusters[perm], s2, sb2), abs=1e-9)


@given(st.floats(-5, 5), st.integers(1, 200), st.floats(0, 10), st.floats(0.01, 10))
def test_shrinkage_monotone(rbar, n, sb2, s2):
    def b(n_, sb2_):
        return abs(estep(np.full(n_, rbar), np.zeros(n_, int), s2, sb2_)[0])

    assert b(n + 1, sb2) >= b(n, sb2) - 1e-12
    assert b(n, sb2 * 1.5 + 0.01) >= b(n, sb2) - 1e-12


# ---------------------------------------------------------------- fitting

def friedman(seed, sigma_b=2.0, per_cluster=40):
    return gen_clustered(SynthSpec(n_clusters=20, per_cluster=per_cluster,
                                   sigma_b=sigma_b, sigma_e=1.0, seed=seed))


def test_blup_identity_at_fitted_point():
    X, y, clusters, _ = friedman(1)
    model = fit_merf(X, y, clusters, MerfParams(forest=SMALL_FOREST))
    resid = y - model.forest.predict(X)
    for c, bc in model.b.items():
        r = resid[clusters == c]
        n = len(r)
        want = n * model.sigma_b2 * r.mean() / (n * model.sigma_b2 + model.sigma2)
        assert bc == pytest.approx(want, abs=1e-8)
    assert model.sigma2 > 0 and model.sigma_b2 >= 0
    assert 1 <= len(model.trace) <= 50
    assert model.converged == (len(model.trace) < 50)


def test_sigma_b_zero_is_a_fixed_point():
    X, y, clusters, _ = friedman(2)
    prm = MerfParams(forest=SMALL_FOREST, init_sigma_b2=0.0)
    model = fit_merf(X, y, clusters, prm)
    assert all(v == 0 for v in model.b.values()) and model.sigma_b2 == 0
    forest = fit_forest(X, y, SMALL_FOREST)
    Xq = np.random.default_rng(0).random((50, X.shape[1]))
    assert np.array_equal(model.predict(Xq, np.arange(50) % 20), forest.predict(Xq))


def test_termination_and_trace_length():
    X, y, clusters, _ = friedman(3)
    model = fit_merf(X, y, clusters, MerfParams(forest=ForestParams(n_trees=3), max_em_iters=4,
                                                gll_rel_tol=1e-300))
    assert len(model.trace) == 4 and not model.converged


def test_one_point_per_cluster_terminates():
    rng = np.random.default_rng(5)
    X = rng.random((30, 3))
    y = X[:, 0] * 5 + rng.normal(size=30)
    model = fit_merf(X, y, np.arange(30), MerfParams(forest=ForestParams(n_trees=5)))
    assert len(model.trace) <= 50
    assert np.isfinite([model.sigma2, model.sigma_b2, *model.b.values()]).all()


@pytest.mark.parametrize("seed", range(1, 6))
def test_null_data_gives_small_random_variance(seed):
    X, y, clusters, _ = friedman(seed, sigma_b=0.0)
    model = fit_merf(X, y, clusters, MerfParams(forest=ForestParams(n_trees=20, seed=seed)))
    assert model.sigma_b2 <= 0.1 * y.var()


def test_clustered_variance_recovered_on_most_seeds():
    hits = 0
    for seed in range(1, 6):
        X, y, clusters, _ = friedman(seed)
        model = fit_merf(X, y, clusters, MerfParams(forest=ForestParams(n_trees=20, seed=seed)))
        hits += 2 <= model.sigma_b2 <= 8
    assert hits >= 4


def test_known_cluster_predictions_remove_cluster_bias():
    X, y, clusters, _ = friedman(7, per_cluster=60)
    train = np.tile(np.r_[np.ones(40, bool), np.zeros(20, bool)], 20)
    prm = ForestParams(n_trees=20, seed=7)
    model = fit_merf(X[train], y[train], clusters[train], MerfParams(forest=prm))
    forest = fit_forest(X[train], y[train], prm)
    Xt, yt, ct = X[~train], y[~train], clusters[~train]
    res_m = yt - model.predict(Xt, ct)
    res_f = yt - forest.predict(Xt)
    better = [abs(res_m[ct == c].mean()) < abs(res_f[ct == c].mean()) for c in range(20)]
    assert np.mean(better) >= 0.8


def test_prediction_contract():
    X, y, clusters, _ = friedman(8)
    model = fit_merf(X, y, clusters, MerfParams(forest=SMALL_FOREST))
    x = X[0]
    assert predict_merf(model, x, 999) == model.forest.predict(x)
    assert predict_merf(model, x) == model.forest.predict(x)
    model.b[3] = 0.5
    assert predict_merf(model, x, 3) == model.forest.predict(x) + 0.5
    with pytest.raises(ValueError):
        predict_merf(model, x[:4], 3)


def test_input_validation():
    with pytest.raises(ValueError):
        fit_merf([[1.0], [2.0]], [1.0, 2.0], [0])
    with pytest.raises(ValueError):
        fit_merf([[1.0], [np.nan]], [1.0, 2.0], [0, 0])
    with pytest.raises(ValueError):
        MerfParams(max_em_iters=0).validate()
    with pytest.raises(ValueError):
        MerfParams(init_sigma2=0.0).validate()


def test_serialization_round_trip():
    X, y, clusters, _ = friedman(9)
    model = fit_merf(X, y, clusters, MerfParams(forest=SMALL_FOREST))
    model.scheme = ClusterScheme(ClusterMode.AGE, 3, age_edges=[30.0, 50.0])
    text = model.dumps()
    back = MerfModel.loads(text)
    assert back.dumps() == text
    assert np.array_equal(back.predict(X, clusters), model.predict(X, clusters))
    assert back.initial_gll == model.initial_gll and len(back.trace) == len(model.trace)
