import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fatigue_merf.evaluation import (
    Dataset, ModelConfig, cross_validate, fit_linear_baseline, kfold,
    load_features, metrics, modality_importance, pearson, subject_kfold, train_medians,
    write_reports,
)
from fatigue_merf.features import feature_meta
from fatigue_merf.forest import ForestParams
from fatigue_merf.merf import ClusterScheme

FAST = ForestParams(n_trees=8, min_samples_leaf=3)


# ---------------------------------------------------------------- metrics

def test_metric_examples():
    m = metrics([1.0, 2.0], [1.0, 2.0])
    assert (m.rmse, m.mae, m.mape, m.mape_excluded) == (0, 0, 0, 0)
    m = metrics([0, 0], [3, 4])
    assert abs(m.rmse - math.sqrt(12.5)) <= 1e-12
    assert math.isnan(m.mape) and m.mape_excluded == 2
    m = metrics([2, 4], [1, 6])
    assert abs(m.mae - 1.5) <= 1e-12 and abs(m.mape - 0.5) <= 1e-12
    with pytest.raises(ValueError):
        metrics([], [])
    with pytest.raises(ValueError):
        metrics([1, 2], [1])


def test_pearson_examples():
    y = np.array([1.0, 2.0, 5.0, 3.0])
    assert abs(pearson(y, 2 * y + 3) - 1) <= 1e-12
    assert abs(pearson(y, -y) + 1) <= 1e-12
    assert abs(pearson([1, 2, 3], [1, 3, 2]) - 0.5) <= 1e-12
    assert math.isnan(pearson([1, 1, 1], [1, 2, 3]))
    with pytest.raises(ValueError):
        pearson([1.0], [1.0])


@given(st.lists(st.floats(0.5, 100), min_size=3, max_size=40), st.floats(0.1, 50),
       st.integers(0, 2**31))
def test_metric_scale_law(ys, s, seed):
    y = np.asarray(ys)
    yhat = y + np.random.default_rng(seed).normal(0, 1, y.size)
    a, b = metrics(y, yhat), metrics(s * y, s * yhat)
    assert b.rmse == pytest.approx(s * a.rmse, rel=1e-9, abs=1e-12)
    assert b.mae == pytest.approx(s * a.mae, rel=1e-9, abs=1e-12)
    assert b.mape == pytest.approx(a.mape, rel=1e-9, abs=1e-12)
    r1, r2 = pearson(y, yhat), pearson(s * y, s * yhat)
    assert (math.isnan(r1) and math.isnan(r2)) or r2 == pytest.approx(r1, abs=1e-9)


# ---------------------------------------------------------------- folds

def test_kfold_examples():
    assert np.bincount(kfold(10, 5, 0).folds).tolist() == [2] * 5
    assert sorted(np.bincount(kfold(11, 5, 0).folds).tolist()) == [2, 2, 2, 2, 3]
    assert np.array_equal(kfold(50, 5, 9).folds, kfold(50, 5, 9).folds)
    assert not np.array_equal(kfold(50, 5, 9).folds, kfold(50, 5, 10).folds)
    with pytest.raises(ValueError):
        kfold(3, 5)
    with pytest.raises(ValueError):
        kfold(10, 1)


@given(st.integers(2, 20).flatmap(lambda k: st.tuples(st.just(k), st.integers(k, 300))),
       st.integers(0, 2**31))
def test_kfold_partition(kn, seed):
    k, n = kn
    fa = kfold(n, k, seed)
    sizes = np.bincount(fa.folds, minlength=k)
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    seen = np.concatenate([fa.split(f)[1] for f in range(k)])
    assert sorted(seen.tolist()) == list(range(n))
    for f in range(k):
        train, test = fa.split(f)
        assert not set(train) & set(test)


def test_subject_kfold_keeps_subjects_together():
    sids = np.repeat([f"S{i}" for i in range(12)], 7)
    fa = subject_kfold(sids, 4, seed=2)
    for s in np.unique(sids):
        assert len(set(fa.folds[sids == s])) == 1


# ---------------------------------------------------------------- linear baseline

def test_linear_exact_fit():
    x = np.arange(10.0)[:, None]
    model = fit_linear_baseline(x, 3 * x[:, 0], ridge=0.0)
    assert model.weights[0] == pytest.approx(3, abs=1e-9)
    assert model.intercept == pytest.approx(0, abs=1e-9)


def test_linear_ridge_limit_and_wide_design():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    huge = fit_linear_baseline(X, y, ridge=1e12)
    assert np.abs(huge.weights).max() < 1e-9
    np.testing.assert_allclose(huge.predict(X), y.mean(), atol=1e-8)
    Xw = rng.normal(size=(400, 754))
    wide = fit_linear_baseline(Xw, rng.normal(size=400), ridge=1.0)
    assert np.isfinite(wide.weights).all()
    with pytest.raises(np.linalg.LinAlgError):
        fit_linear_baseline(Xw, rng.normal(size=400), ridge=0.0)


def test_primal_and_dual_ridge_agree():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 30))
    y = rng.normal(size=20)
    dual = fit_linear_baseline(X, y, ridge=0.7)
    Xc, yc = X - X.mean(0), y - y.mean()
    w = np.linalg.solve(Xc.T @ Xc + 0.7 * np.eye(30), Xc.T @ yc)
    np.testing.assert_allclose(dual.weights, w, atol=1e-10)


# ---------------------------------------------------------------- modality importance

def test_modality_importance_examples():
    meta = feature_meta()
    imp = np.zeros(754)
    imp[:15] = 1 / 15
    mi = modality_importance(imp, meta)
    assert mi.counts == {"ECG": 15, "ACCEL": 0, "TEMP": 0, "RESP": 0}
    uniform = modality_importance(np.full(754, 1 / 754), meta)
    assert uniform.top_features == list(range(15)) and sum(uniform.counts.values()) == 15
    with pytest.raises(ValueError):
        modality_importance(np.ones(10) / 10, ["ECG"] * 10, top_k=11)


@given(st.lists(st.floats(0, 1), min_size=15, max_size=60), st.integers(1, 15))
def test_modality_importance_counts(raw, k):
    imp = np.asarray(raw)
    if imp.sum() == 0:
        return
    imp = imp / imp.sum()
    mods = [("ECG", "ACCEL", "TEMP", "RESP")[i % 4] for i in range(imp.size)]
    mi = modality_importance(imp, mods, k)
    assert sum(mi.counts.values()) == k
    assert all(v >= 0 for v in mi.scores.values()) and sum(mi.scores.values()) <= 1 + 1e-12
    assert min(imp[mi.top_features]) >= max(np.delete(imp, mi.top_features), default=0)


# ---------------------------------------------------------------- cross-validation

def demo_dataset(seed=0, n_subjects=12, per_subject=10):
    rng = np.random.default_rng(seed)
    n = n_subjects * per_subject
    sids = np.repeat([f"S{i:02d}" for i in range(n_subjects)], per_subject)
    ages = np.repeat(rng.uniform(20, 70, n_subjects), per_subject)
    bmis = np.repeat(rng.uniform(18, 35, n_subjects), per_subject)
    X = rng.normal(size=(n, 6))
    X[rng.random(X.shape) < 0.05] = np.nan
    y = np.round(np.clip(5 + 2 * np.nan_to_num(X[:, 0]) + (ages - 45) / 10
                         + rng.normal(0, 0.5, n), 0, 10))
    return Dataset(X, y, sids, ages, bmis)


@pytest.mark.parametrize("config", list(ModelConfig)[:5])
def test_cross_validate_runs_every_config(config):
    ds = demo_dataset()
    rep = cross_validate(ds, config, k=5, seed=1, forest=FAST)
    assert len(rep.folds) == 5 and np.isfinite(rep.predictions).all()
    assert -1 <= rep.correlation <= 1
    m, s = rep.rmse
    assert m > 0 and s >= 0
    assert rep.rmse[0] == pytest.approx(np.mean([f.metrics.rmse for f in rep.folds]))
    assert rep.rmse[1] == pytest.approx(np.std([f.metrics.rmse for f in rep.folds], ddof=1))


def test_cross_validate_is_deterministic():
    ds = demo_dataset(1)
    a = cross_validate(ds, "MERF_AGE_BMI", seed=4, forest=FAST)
    b = cross_validate(ds, "MERF_AGE_BMI", seed=4, forest=FAST)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert np.array_equal(a.predictions, b.predictions)


def test_no_leakage_from_held_out_points():
    ds = demo_dataset(2)
    rep = cross_validate(ds, "MERF_AGE_BMI", seed=3, forest=FAST)
    for f in rep.folds:
        np.testing.assert_array_equal(f.medians, train_medians(ds.X[f.train]))
        _, first = np.unique(ds.subject_ids[f.train], return_index=True)
        rows = f.train[first]
        ref = ClusterScheme(f.scheme.mode, f.scheme.n_bins).fit(ds.ages[rows], ds.bmis[rows])
        assert ref.age_edges == f.scheme.age_edges and ref.bmi_edges == f.scheme.bmi_edges
    # scrambling held-out labels of fold 0 leaves that fold's predictions unchanged
    test0 = rep.folds[0].test
    ds2 = Dataset(ds.X, ds.y.copy(), ds.subject_ids, ds.ages, ds.bmis)
    ds2.y[test0] = 10 - ds2.y[test0]
    rep2 = cross_validate(ds2, "MERF_AGE_BMI", seed=3, forest=FAST)
    assert np.array_equal(rep2.predictions[test0], rep.predictions[test0])


def test_perfect_label_rf_beats_half_std():
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 10, (150, 4))
    y = np.floor(X[:, 2])
    rep = cross_validate(Dataset(X, y), "RF", seed=0, forest=ForestParams(n_trees=20))
    assert rep.rmse[0] < 0.5 * y.std()


def test_config_dataset_mismatch():
    ds = demo_dataset()
    bare = Dataset(ds.X, ds.y)
    with pytest.raises(ValueError, match="demographics"):
        cross_validate(bare, "MERF_AGE", forest=FAST)
    with pytest.raises(ValueError):
        cross_validate(bare, "MERF_GROUP", forest=FAST)
    with pytest.raises(ValueError):
        cross_validate(bare, "RF", split="subject", forest=FAST)


def test_subject_split_mode():
    ds = demo_dataset(3)
    rep = cross_validate(ds, "RF", split="subject", seed=0, forest=FAST)
    for f in rep.folds:
        assert not set(ds.subject_ids[f.train]) & set(ds.subject_ids[f.test])


def test_group_config_uses_dataset_groups():
    ds = demo_dataset(4)
    ds.groups = np.array([int(s[1:]) % 3 for s in ds.subject_ids])
    rep = cross_validate(ds, "MERF_GROUP", seed=0, forest=FAST)
    assert all(f.scheme is None and f.sigma_b2 is not None for f in rep.folds)


# ---------------------------------------------------------------- files

def test_write_reports(tmp_path):
    ds = demo_dataset(6)
    ds.X = np.nan_to_num(np.tile(ds.X, (1, 126))[:, :754])
    ds.meta = feature_meta()
    reports = [cross_validate(ds, c, seed=0, forest=FAST) for c in ("LINEAR", "RF", "MERF_AGE")]
    write_reports(reports, tmp_path, meta=ds.meta)
    with open(tmp_path / "table1.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["Method"] for r in rows] == ["Linear Regression", "Random Forest", "MERF Age"]
    assert all("±" in r["RMSE"] and "±" in r["MAE"] for r in rows)
    with open(tmp_path / "fig1.csv", encoding="utf-8") as fh:
        fig = list(csv.DictReader(fh))
    assert {r["model"] for r in fig} == {"RF", "MERF_AGE"}
    for model in ("RF", "MERF_AGE"):
        assert sum(int(r["top15_count"]) for r in fig if r["model"] == model) == 15
    doc = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert doc["reference"]["table1"]["MERF_AGE_BMI"]["RMSE"] == [1.78, 0.13]
    assert [m["config"] for m in doc["models"]] == ["LINEAR", "RF", "MERF_AGE"]


def test_load_features_round_trip(tmp_path):
    header = ["subject_id", "segment_start_ms", "score", "f0", "f1"]
    (tmp_path / "features.csv").write_text(
        ",".join(header) + "\n007,1,3,0.5,\n008,2,4,1.5,2.0\n", encoding="utf-8")
    (tmp_path / "subjects.csv").write_text("subject_id,age,bmi\n007,30,22.5\n008,40,27\n",
                                           encoding="utf-8")
    ds = load_features(tmp_path / "features.csv", tmp_path / "subjects.csv")
    assert ds.subject_ids.tolist() == ["007", "008"]
    assert np.isnan(ds.X[0, 1]) and ds.ages.tolist() == [30, 40]
    (tmp_path / "subjects.csv").write_text("subject_id,age,bmi\n007,30,22.5\n", encoding="utf-8")
    with pytest.raises(ValueError, match="008"):
        load_features(tmp_path / "features.csv", tmp_path / "subjects.csv")
