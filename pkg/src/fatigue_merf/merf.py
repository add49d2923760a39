"""Mixed-effects random forest with demographic random intercepts.

Model: ``y_j = f(x_j) + b_{c(j)} + e_j`` with ``b_i ~ N(0, sigma_b2)`` and
``e_j ~ N(0, sigma2)``. The fixed part ``f`` is a :class:`RandomForest`;
the intercepts and both variances are fitted by EM. All cluster-level
algebra uses the intercept-only closed forms of ``V_i = sigma_b2 J + sigma2 I``.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .forest import ForestParams, RandomForest

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8
FORMAT_VERSION = 1


class ClusterMode(str, enum.Enum):
    AGE = "AGE"
    BMI = "BMI"
    AGE_AND_BMI = "AGE_AND_BMI"


@dataclass
class ClusterScheme:
    """Quantile bins over age and/or BMI, with edges frozen at fit time."""

    mode: ClusterMode = ClusterMode.AGE_AND_BMI
    n_bins: int = 3
    age_edges: list = field(default_factory=list)
    bmi_edges: list = field(default_factory=list)

    def __post_init__(self):
        self.mode = ClusterMode(self.mode)

    @property
    def n_clusters(self):
        return self.n_bins ** 2 if self.mode is ClusterMode.AGE_AND_BMI else self.n_bins

    def fit(self, ages, bmis):
        """Inner bin edges at the 1/k, ..., (k-1)/k quantiles of training subjects."""
        qs = 100.0 * np.arange(1, self.n_bins) / self.n_bins
        if self.mode in (ClusterMode.AGE, ClusterMode.AGE_AND_BMI):
            self.age_edges = np.percentile(np.asarray(ages, float), qs).tolist()
        if self.mode in (ClusterMode.BMI, ClusterMode.AGE_AND_BMI):
            self.bmi_edges = np.percentile(np.asarray(bmis, float), qs).tolist()
        return self

    def assign(self, age=None, bmi=None):
        age_bin = bmi_bin = 0
        if self.mode in (ClusterMode.AGE, ClusterMode.AGE_AND_BMI):
            if age is None or not np.isfinite(age):
                raise ValueError("subject has no age")
            age_bin = int(np.searchsorted(self.age_edges, age, side="right"))
        if self.mode in (ClusterMode.BMI, ClusterMode.AGE_AND_BMI):
            if bmi is None or not np.isfinite(bmi):
                raise ValueError("subject has no BMI")
            bmi_bin = int(np.searchsorted(self.bmi_edges, bmi, side="right"))
        if self.mode is ClusterMode.AGE:
            return age_bin
        if self.mode is ClusterMode.BMI:
            return bmi_bin
        return age_bin * self.n_bins + bmi_bin


def assign_clusters(subjects, scheme):
    """Map each subject id to a cluster id.

    ``subjects`` is a mapping id -> object with ``age`` and ``bmi`` attributes
    (e.g. :class:`~fatigue_merf.ingest.SubjectRecord`).
    """
    out = {}
    for sid, rec in subjects.items():
        age = getattr(rec, "age", None)
        bmi = getattr(rec, "bmi", None)
        try:
            out[sid] = scheme.assign(age, bmi)
        except ValueError as exc:
            raise ValueError(f"subject {sid!r}: {exc}") from None
    return out


def _groups(clusters):
    """Sorted unique cluster ids and the row indices of each."""
    clusters = np.asarray(clusters)
    ids, inverse = np.unique(clusters, return_inverse=True)
    return ids, inverse


def estep(residuals, clusters, sigma2, sigma_b2):
    """BLUP of each cluster intercept: n s_b r_bar / (n s_b + s)."""
    r = np.asarray(residuals, dtype=float)
    ids, inv = _groups(clusters)
    n = np.bincount(inv, minlength=len(ids)).astype(float)
    sums = np.bincount(inv, weights=r, minlength=len(ids))
    b = sigma_b2 * sums / (n * sigma_b2 + sigma2)
    return {k.item() if hasattr(k, "item") else k: float(v) for k, v in zip(ids, b)}


def _cluster_terms(residuals, b, clusters):
    r = np.asarray(residuals, dtype=float)
    ids, inv = _groups(clusters)
    bvec = np.array([b[k.item() if hasattr(k, "item") else k] for k in ids], dtype=float)
    eps = r - bvec[inv]
    n = np.bincount(inv, minlength=len(ids)).astype(float)
    ete = np.bincount(inv, weights=eps * eps, minlength=len(ids))
    return n, ete, bvec


def update_variance(residuals, b, clusters, sigma2, sigma_b2):
    """EM updates of (sigma2, sigma_b2) given the current intercepts.

    ``sigma2' = (1/N) sum_i [e_i'e_i + s (n_i - s tr V_i^-1)]``,
    ``sigma_b2' = (1/q) sum_i [b_i^2 + s_b - s_b^2 1'V_i^-1 1]``.
    """
    n, ete, bvec = _cluster_terms(residuals, b, clusters)
    denom = sigma2 + n * sigma_b2
    tr_vinv = (n - n * sigma_b2 / denom) / sigma2
    one_vinv_one = n / denom
    new_sigma2 = np.sum(ete + sigma2 * (n - sigma2 * tr_vinv)) / n.sum()
    new_sigma_b2 = np.mean(bvec ** 2 + sigma_b2 - sigma_b2 * one_vinv_one * sigma_b2)
    return max(float(new_sigma2), VARIANCE_FLOOR), max(float(new_sigma_b2), 0.0)


def gll(residuals, b, clusters, sigma2, sigma_b2):
    """Generalised log-likelihood monitored during EM.

    ``sum_i [e_i'e_i/s + b_i^2/s_b + n_i ln s + ln s_b]``; the two
    intercept terms are dropped when ``sigma_b2 == 0``.
    """
    n, ete, bvec = _cluster_terms(residuals, b, clusters)
    total = np.sum(ete) / sigma2 + np.sum(n) * np.log(sigma2)
    if sigma_b2 > 0:
        total += np.sum(bvec ** 2) / sigma_b2 + len(n) * np.log(sigma_b2)
    return float(total)


@dataclass
class MerfParams:
    forest: ForestParams = field(default_factory=ForestParams)
    max_em_iters: int = 50
    gll_rel_tol: float = 1e-4
    init_sigma2: float = 1.0
    init_sigma_b2: float = 1.0

    def validate(self):
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be >= 1")
        if self.gll_rel_tol <= 0:
            raise ValueError("gll_rel_tol must be > 0")
        if self.init_sigma2 <= 0 or self.init_sigma_b2 < 0:
            raise ValueError("initial variances must satisfy sigma2 > 0, sigma_b2 >= 0")


@dataclass
class EMStep:
    gll: float
    sigma2: float
    sigma_b2: float
    max_delta_b: float


@dataclass
class MerfModel:
    forest: RandomForest
    b: dict
    sigma2: float
    sigma_b2: float
    trace: list
    scheme: ClusterScheme | None = None
    params: MerfParams | None = None
    converged: bool = False
    initial_gll: float = float("nan")  # GLL at b = 0 and the initial variances

    def predict(self, X, clusters=None):
        """Forest prediction plus the intercept of each known cluster."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        fx = np.atleast_1d(self.forest.predict(X))
        if clusters is None:
            return float(fx[0]) if single else fx
        cl = [clusters] if single else list(clusters)
        out = fx.copy()
        for j, c in enumerate(cl):
            key = c.item() if hasattr(c, "item") else c
            if key is not None and key in self.b:
                out[j] = fx[j] + self.b[key]
        return float(out[0]) if single else out

    def to_dict(self):
        return {
            "format": "fatigue_merf.merf",
            "version": FORMAT_VERSION,
            "forest": self.forest.to_dict(),
            "b": [[_jsonable(k), v] for k, v in sorted(self.b.items(), key=lambda kv: str(kv[0]))],
            "sigma2": self.sigma2,
            "sigma_b2": self.sigma_b2,
            "converged": self.converged,
            "initial_gll": self.initial_gll if np.isfinite(self.initial_gll) else None,
            "trace": [asdict(s) for s in self.trace],
            "scheme": None if self.scheme is None else {
                "mode": self.scheme.mode.value, "n_bins": self.scheme.n_bins,
                "age_edges": list(self.scheme.age_edges),
                "bmi_edges": list(self.scheme.bmi_edges)},
            "params": None if self.params is None else {
                "max_em_iters": self.params.max_em_iters,
                "gll_rel_tol": self.params.gll_rel_tol,
                "init_sigma2": self.params.init_sigma2,
                "init_sigma_b2": self.params.init_sigma_b2},
        }

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported MERF format version {doc.get('version')!r}")
        forest = RandomForest.from_dict(doc["forest"])
        scheme = ClusterScheme(**doc["scheme"]) if doc.get("scheme") else None
        params = None
        if doc.get("params"):
            params = MerfParams(forest=forest.params, **doc["params"])
        return cls(forest, {k: v for k, v in doc["b"]}, doc["sigma2"], doc["sigma_b2"],
                   [EMStep(**s) for s in doc["trace"]], scheme, params,
                   doc.get("converged", False),
                   float("nan") if doc.get("initial_gll") is None else doc["initial_gll"])

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _jsonable(k):
    return k.item() if hasattr(k, "item") else k


def predict_merf(model, x, cluster_id=None):
    return model.predict(x, cluster_id)


def fit_merf(X, y, clusters, params=None, threads=1):
    """EM fit of forest + per-cluster random intercepts.

    Each iteration: fit the forest on ``y - b[c]`` (same seed every time),
    take BLUPs of the intercepts from ``y - f(X)``, update both variances
    and record the GLL. Stops when the relative GLL change drops below
    ``gll_rel_tol`` or after ``max_em_iters`` iterations.
    """
    params = params or MerfParams()
    params.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    clusters = np.asarray(clusters)
    if len(clusters) != len(y):
        raise ValueError("one cluster id per point is required")
    if len(y) < 2:
        raise ValueError("need at least two samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")

    ids, inv = _groups(clusters)
    keys = [_jsonable(k) for k in ids]
    bvec = np.zeros(len(ids))
    sigma2, sigma_b2 = params.init_sigma2, params.init_sigma_b2
    trace = []
    prev = None
    converged = False
    for it in range(params.max_em_iters):
        forest = RandomForest(params.forest).fit(X, y - bvec[inv], threads=threads)
        resid = y - forest.predict(X)
        if it == 0:
            initial = gll(resid, dict(zip(keys, bvec.tolist())), clusters, sigma2, sigma_b2)
        b = estep(resid, clusters, sigma2, sigma_b2)
        new_b = np.array([b[k] for k in keys])
        sigma2, sigma_b2 = update_variance(resid, b, clusters, sigma2, sigma_b2)
        value = gll(resid, b, clusters, sigma2, sigma_b2)
        trace.append(EMStep(value, sigma2, sigma_b2, float(np.max(np.abs(new_b - bvec)))))
        bvec = new_b
        log.debug("EM %d: gll=%.6g sigma2=%.4g sigma_b2=%.4g", it, value, sigma2, sigma_b2)
        if prev is not None and abs(value - prev) / (abs(value) + 1e-12) < params.gll_rel_tol:
            converged = True
            break
        prev = value
    # report intercepts consistent with the final variance components
    b = estep(resid, clusters, sigma2, sigma_b2)
    return MerfModel(forest, b, sigma2, sigma_b2, trace, params=params, converged=converged,
                     initial_gll=initial)
