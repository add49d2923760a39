"""Cross-validation, regression metrics, linear baseline and modality importance."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .forest import ForestParams, RandomForest
from .ingest import parse_subjects
from .rng import keyed_rng
from .merf import ClusterMode, ClusterScheme, MerfParams, fit_merf

MODALITY_ORDER = ("ECG", "ACCEL", "TEMP", "RESP")

# Published cohort results (21 patients, 422 segments). Private data: kept
# for reference in reports, never compared against.
REFERENCE_TABLE1 = {
    "LINEAR": {"RMSE": (2.66, 0.39), "MAE": (2.08, 0.27), "MAPE": (0.59, 0.11), "Corr": 0.41},
    "RF": {"RMSE": (1.98, 0.08), "MAE": (1.56, 0.07), "MAPE": (0.47, 0.05), "Corr": 0.71},
    "MERF_AGE": {"RMSE": (1.82, 0.10), "MAE": (1.38, 0.08), "MAPE": (0.38, 0.04), "Corr": 0.74},
    "MERF_BMI": {"RMSE": (1.88, 0.11), "MAE": (1.47, 0.07), "MAPE": (0.42, 0.06), "Corr": 0.73},
    "MERF_AGE_BMI": {"RMSE": (1.78, 0.13), "MAE": (1.35, 0.09), "MAPE": (0.36, 0.07), "Corr": 0.75},
}
REFERENCE_COHORT = {"subjects": 21, "data_points": 422}


class ModelConfig(str, enum.Enum):
    LINEAR = "LINEAR"
    RF = "RF"
    MERF_AGE = "MERF_AGE"
    MERF_BMI = "MERF_BMI"
    MERF_AGE_BMI = "MERF_AGE_BMI"
    MERF_GROUP = "MERF_GROUP"  # explicit cluster labels carried by the dataset

    @property
    def is_merf(self):
        return self.value.startswith("MERF")

    @property
    def cluster_mode(self):
        return {"MERF_AGE": ClusterMode.AGE, "MERF_BMI": ClusterMode.BMI,
                "MERF_AGE_BMI": ClusterMode.AGE_AND_BMI}.get(self.value)


TABLE1_LABELS = {
    ModelConfig.LINEAR: "Linear Regression",
    ModelConfig.RF: "Random Forest",
    ModelConfig.MERF_AGE: "MERF Age",
    ModelConfig.MERF_BMI: "MERF BMI",
    ModelConfig.MERF_AGE_BMI: "MERF Age&BMI",
    ModelConfig.MERF_GROUP: "MERF Group",
}


# ------------------------------------------------------------------ metrics

@dataclass
class MetricSet:
    rmse: float
    mae: float
    mape: float  # NaN when every target is zero
    mape_excluded: int


def metrics(y, yhat):
    """RMSE, MAE and MAPE; MAPE skips zero targets and reports how many."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.size == 0 or y.shape != yhat.shape:
        raise ValueError("y and yhat must be non-empty and of equal length")
    err = y - yhat
    nz = y != 0
    mape = float(np.mean(np.abs(err[nz]) / np.abs(y[nz]))) if nz.any() else math.nan
    return MetricSet(float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err))),
                     mape, int((~nz).sum()))


def pearson(y, yhat):
    """Sample correlation; NaN if either input has zero variance."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.size < 2 or y.shape != yhat.shape:
        raise ValueError("pearson needs two equal-length series of length >= 2")
    if np.ptp(y) == 0 or np.ptp(yhat) == 0:
        return math.nan
    dy = y - y.mean()
    dh = yhat - yhat.mean()
    sy = np.sqrt(np.sum(dy * dy))
    sh = np.sqrt(np.sum(dh * dh))
    return float(np.clip(np.sum(dy * dh) / (sy * sh), -1.0, 1.0))


# ------------------------------------------------------------------ folds

@dataclass
class FoldAssignment:
    folds: np.ndarray
    k: int
    seed: int

    def split(self, fold):
        return np.flatnonzero(self.folds != fold), np.flatnonzero(self.folds == fold)


def kfold(n, k, seed=0):
    """Seeded shuffle, then deal points round-robin into k folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} points into {k} folds")
    perm = keyed_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return FoldAssignment(folds, k, seed)


def subject_kfold(subject_ids, k, seed=0):
    """Folds over subjects: every point of a subject lands in one fold."""
    uniq, inv = np.unique(np.asarray(subject_ids), return_inverse=True)
    sub = kfold(len(uniq), k, seed)
    return FoldAssignment(sub.folds[inv], k, seed)


# ------------------------------------------------------------------ linear

@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.weights + self.intercept


def fit_linear_baseline(X, y, ridge=1.0):
    """Ridge regression on centred data (intercept unpenalised)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    n, p = Xc.shape
    if ridge == 0 and np.linalg.matrix_rank(Xc) < p:
        raise np.linalg.LinAlgError("singular design; use ridge > 0")
    if p <= n:
        w = np.linalg.solve(Xc.T @ Xc + ridge * np.eye(p), Xc.T @ yc)
    else:
        w = Xc.T @ np.linalg.solve(Xc @ Xc.T + ridge * np.eye(n), yc)
    return LinearModel(w, float(ym - xm @ w))


# ------------------------------------------------------------------ modality importance

@dataclass
class ModalityImportance:
    top_k: int
    counts: dict
    scores: dict
    top_features: list = field(default_factory=list)


def modality_importance(importance, meta, top_k=15):
    """Counts and summed scores per modality among the top_k features.

    Ties in importance go to the lower feature index.
    """
    imp = np.asarray(importance, dtype=float)
    if top_k > imp.size:
        raise ValueError(f"top_k={top_k} exceeds the number of features ({imp.size})")
    mods = [m["modality"] if isinstance(m, dict) else m for m in meta]
    if len(mods) != imp.size:
        raise ValueError("feature metadata does not match importance length")
    order = np.lexsort((np.arange(imp.size), -imp))[:top_k]
    names = [m for m in MODALITY_ORDER if m in mods] + sorted(set(mods) - set(MODALITY_ORDER))
    counts = {m: 0 for m in names}
    scores = {m: 0.0 for m in names}
    for j in order:
        counts[mods[j]] += 1
        scores[mods[j]] += float(imp[j])
    return ModalityImportance(top_k, counts, scores, [int(j) for j in order])


# ------------------------------------------------------------------ datasets

@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    subject_ids: np.ndarray | None = None
    ages: np.ndarray | None = None
    bmis: np.ndarray | None = None
    groups: np.ndarray | None = None
    meta: list | None = None

    def __len__(self):
        return len(self.y)


def load_features(features_csv, subjects_csv=None, meta_json=None):
    """Read ``features.csv`` (and optional demographics/metadata) as a Dataset."""
    df = pd.read_csv(features_csv, dtype={"subject_id": str})
    fcols = [c for c in df.columns if c.startswith("f") and c[1:].isdigit()]
    X = df[fcols].to_numpy(float)
    ds = Dataset(X, df["score"].to_numpy(float), df["subject_id"].to_numpy(str))
    if subjects_csv is not None:
        table = parse_subjects(subjects_csv)
        missing = sorted(set(ds.subject_ids) - set(table))
        ds.ages = np.array([table[s].age if s in table else np.nan for s in ds.subject_ids], float)
        ds.bmis = np.array([table[s].bmi if s in table else np.nan for s in ds.subject_ids], float)
        if missing:
            raise ValueError(f"no demographics for subjects {missing}")
    if meta_json is not None:
        with open(meta_json, encoding="utf-8") as fh:
            ds.meta = json.load(fh)["features"]
    return ds


# ------------------------------------------------------------------ cross-validation

@dataclass
class FoldResult:
    fold: int
    train: np.ndarray
    test: np.ndarray
    medians: np.ndarray
    metrics: MetricSet
    scheme: ClusterScheme | None = None
    importance: np.ndarray | None = None
    sigma2: float | None = None
    sigma_b2: float | None = None
    em_iters: int | None = None


@dataclass
class CvReport:
    config: ModelConfig
    k: int
    seed: int
    split: str
    folds: list
    predictions: np.ndarray
    y: np.ndarray
    correlation: float
    importance: np.ndarray | None = None

    def _agg(self, name):
        vals = np.array([getattr(f.metrics, name) for f in self.folds], float)
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            return math.nan, math.nan
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    @property
    def rmse(self):
        return self._agg("rmse")

    @property
    def mae(self):
        return self._agg("mae")

    @property
    def mape(self):
        return self._agg("mape")

    def to_dict(self):
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "config": self.config.value,
            "k": self.k,
            "seed": self.seed,
            "split": self.split,
            "rmse": [num(v) for v in self.rmse],
            "mae": [num(v) for v in self.mae],
            "mape": [num(v) for v in self.mape],
            "correlation": num(self.correlation),
            "folds": [{
                "fold": f.fold,
                "n_train": int(f.train.size),
                "n_test": int(f.test.size),
                "rmse": f.metrics.rmse,
                "mae": f.metrics.mae,
                "mape": num(f.metrics.mape),
                "mape_excluded": f.metrics.mape_excluded,
                "sigma2": f.sigma2,
                "sigma_b2": f.sigma_b2,
                "em_iters": f.em_iters,
                "age_edges": None if f.scheme is None else list(f.scheme.age_edges),
                "bmi_edges": None if f.scheme is None else list(f.scheme.bmi_edges),
            } for f in self.folds],
            "importance": None if self.importance is None else self.importance.tolist(),
        }


def fold_seed(seed, fold):
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def train_medians(X):
    """Column medians over finite entries (0 for an all-missing column)."""
    med = np.zeros(X.shape[1])
    ok = np.isfinite(X)
    for j in range(X.shape[1]):
        col = X[ok[:, j], j]
        if col.size:
            med[j] = np.median(col)
    return med


def _impute(X, med):
    X = X.copy()
    bad = ~np.isfinite(X)
    X[bad] = np.take(med, np.nonzero(bad)[1])
    return X


def _point_clusters(ds, config, train, n_bins=3):
    if config is ModelConfig.MERF_GROUP:
        if ds.groups is None:
            raise ValueError("MERF_GROUP needs dataset groups")
        return None, np.asarray(ds.groups)
    if ds.ages is None or ds.bmis is None:
        raise ValueError(f"{config.value} needs subject demographics (age, BMI)")
    scheme = ClusterScheme(config.cluster_mode, n_bins)
    # edges from the training subjects, one vote per subject
    if ds.subject_ids is not None:
        _, first = np.unique(ds.subject_ids[train], return_index=True)
        rows = train[first]
    else:
        rows = train
    scheme.fit(ds.ages[rows], ds.bmis[rows])
    clusters = np.array([scheme.assign(a, b) for a, b in zip(ds.ages, ds.bmis)])
    return scheme, clusters


def cross_validate(ds, config, k=5, seed=0, split="record", forest=None, merf=None,
                   ridge=1.0, n_bins=3, threads=1):
    """k-fold CV of one model configuration.

    Imputation medians, cluster bin edges and all model parameters come
    from the training fold only. Held-out points whose cluster was seen in
    training get their intercept; others get the forest prediction.
    Error metrics are averaged over folds, correlation is pooled over all
    out-of-fold predictions.
    """
    config = ModelConfig(config)
    forest = forest or ForestParams()
    merf = merf or MerfParams(forest=forest)
    if split == "record":
        assignment = kfold(len(ds), k, seed)
    elif split == "subject":
        if ds.subject_ids is None:
            raise ValueError("subject split needs subject ids")
        assignment = subject_kfold(ds.subject_ids, k, seed)
    else:
        raise ValueError(f"unknown split mode {split!r}")

    pred = np.full(len(ds), np.nan)
    folds = []
    importances = []
    for fold in range(k):
        train, test = assignment.split(fold)
        med = train_medians(ds.X[train])
        Xtr, Xte = _impute(ds.X[train], med), _impute(ds.X[test], med)
        ytr = ds.y[train]
        fseed = fold_seed(seed, fold)
        result = FoldResult(fold, train, test, med, None)
        if config is ModelConfig.LINEAR:
            pred[test] = fit_linear_baseline(Xtr, ytr, ridge).predict(Xte)
        elif config is ModelConfig.RF:
            rf = RandomForest(replace(forest, seed=fseed)).fit(Xtr, ytr, threads=threads)
            pred[test] = rf.predict(Xte)
            result.importance = rf.importance
        else:
            scheme, clusters = _point_clusters(ds, config, train, n_bins)
            params = replace(merf, forest=replace(merf.forest, seed=fseed))
            model = fit_merf(Xtr, ytr, clusters[train], params, threads=threads)
            model.scheme = scheme
            pred[test] = model.predict(Xte, clusters[test])
            result.scheme = scheme
            result.importance = model.forest.importance
            result.sigma2, result.sigma_b2 = model.sigma2, model.sigma_b2
            result.em_iters = len(model.trace)
        result.metrics = metrics(ds.y[test], pred[test])
        if result.importance is not None:
            importances.append(result.importance)
        folds.append(result)
    imp = None
    if importances:
        imp = np.mean(importances, axis=0)
        if imp.sum() > 0:
            imp = imp / imp.sum()
    return CvReport(config, k, seed, split, folds, pred, ds.y.copy(),
                    pearson(ds.y, pred), imp)


# ------------------------------------------------------------------ report files

def _pm(mean_std, digits=3):
    m, s = mean_std
    if m is None or math.isnan(m):
        return ""
    return f"{m:.{digits}f}±{s:.{digits}f}"


def write_reports(reports, out_dir, meta=None, top_k=15):
    """Write report.json, table1.csv and fig1.csv for a list of CvReports."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig_rows = []
    shown_k = top_k
    doc = {
        "reference": {
            "note": "published results on a private cohort; not reproducible here",
            "cohort": REFERENCE_COHORT,
            "table1": {k: {m: list(v) if isinstance(v, tuple) else v for m, v in row.items()}
                       for k, row in REFERENCE_TABLE1.items()},
        },
        "models": [],
    }
    with open(out_dir / "table1.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Method,RMSE,MAE,MAPE,Corr\n")
        for rep in reports:
            corr = "" if math.isnan(rep.correlation) else f"{rep.correlation:.3f}"
            fh.write(f"{TABLE1_LABELS[rep.config]},{_pm(rep.rmse)},{_pm(rep.mae)},"
                     f"{_pm(rep.mape)},{corr}\n")
            entry = rep.to_dict()
            if rep.importance is not None:
                mods = meta if meta is not None else ["UNTAGGED"] * rep.importance.size
                k = shown_k = min(top_k, rep.importance.size)
                mi = modality_importance(rep.importance, mods, k)
                entry["modality_importance"] = {"top_k": mi.top_k, "counts": mi.counts,
                                                "scores": mi.scores,
                                                "top_features": mi.top_features}
                for m in mi.counts:
                    fig_rows.append((rep.config.value, m, mi.counts[m], mi.scores[m]))
            doc["models"].append(entry)
    with open(out_dir / "fig1.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"model,modality,top{shown_k}_count,score_sum\n")
        for cfg, m, c, s in fig_rows:
            fh.write(f"{cfg},{m},{c},{s!r}\n")
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, ensure_ascii=False)
    return [out_dir / "report.json", out_dir / "table1.csv", out_dir / "fig1.csv"]
