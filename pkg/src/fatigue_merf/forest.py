"""Random-forest regressor grown from scratch (CART, variance reduction).

Each tree draws its bootstrap sample and per-node feature subsets from its
own Philox generator keyed by ``(seed, tree_index)``, so a fitted
forest is bit-identical whatever the number of worker threads.

Responses are fitted relative to ``offset = min(y)``. Split search only
sees ``y - offset``; an exactly representable shift of ``y`` therefore
leaves every split, gain and importance unchanged.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _tree
from .rng import keyed_rng

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 300
    mtry: int | None = None  # None -> max(1, p // 3)
    min_samples_leaf: int = 5
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def resolved_mtry(self, p):
        mtry = self.mtry if self.mtry is not None else max(1, p // 3)
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry={mtry} outside [1, {p}]")
        return mtry

    def validate(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_node: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_node": self.n_node.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        ints = ("feature", "left", "right", "n_node")
        return cls(**{k: np.asarray(doc[k], dtype=np.int64 if k in ints else float)
                      for k in ("feature", "threshold", "left", "right", "value",
                                "gain", "n_node")})


def tree_rng(seed, tree_index):
    return keyed_rng(seed, tree_index)


def best_split(X, y, rows=None, features=None, min_samples_leaf=1):
    """Best (feature, threshold, gain) for the given rows, or None.

    ``gain`` is the reduction in sum of squared errors.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.arange(len(y)) if rows is None else np.asarray(rows, dtype=np.int64)
    features = (np.arange(X.shape[1]) if features is None
                else np.sort(np.asarray(features, dtype=np.int64)))
    V = np.ascontiguousarray(X[rows].T)
    d = y[rows] - y.min()
    O = _tree.global_order(V)
    f, thr, gain = _tree.node_split(V, d, O, 0, len(rows), features, min_samples_leaf)
    if f < 0:
        return None
    return int(f), float(thr), float(gain)


class RandomForest:
    """Bagged CART regression trees.

    Parameters
    ----------
    params : ForestParams
    """

    def __init__(self, params=None, **kwargs):
        self.params = params if params is not None else ForestParams(**kwargs)
        self.trees = []
        self.offset = 0.0
        self.n_features = None

    def fit(self, X, y, threads=1):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(y) != X.shape[0]:
            raise ValueError("X must be (n, p) with len(y) == n")
        if len(y) < 2:
            raise ValueError("need at least two samples")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite values in X or y")
        prm = self.params
        prm.validate()
        n, p = X.shape
        mtry = prm.resolved_mtry(p)
        max_depth = -1 if prm.max_depth is None else prm.max_depth
        self.offset = float(y.min())
        d = y - self.offset
        Xt = np.ascontiguousarray(X.T)
        G = _tree.global_order(Xt)

        def grow(t):
            rng = tree_rng(prm.seed, t)
            sample = (rng.integers(0, n, n) if prm.bootstrap
                      else np.arange(n, dtype=np.int64))
            keys = rng.random((2 * n + 1, mtry))
            return Tree(*_tree.build_tree(Xt, G, d, sample, mtry, prm.min_samples_leaf,
                                          max_depth, keys))

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                self.trees = list(pool.map(grow, range(prm.n_trees)))
        else:
            self.trees = [grow(t) for t in range(prm.n_trees)]
        self.n_features = p
        self._pack()
        return self

    def _pack(self):
        sizes = [t.n_nodes for t in self.trees]
        self._offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
        self._flat = tuple(cat(k) for k in ("feature", "threshold", "left", "right", "value"))

    def predict(self, X):
        """Mean leaf value over trees; accepts one sample (p,) or a batch (n, p)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X2.shape[1]}")
        out = self.offset + _tree.predict_trees(
            np.ascontiguousarray(X2), self._offsets, *self._flat) / len(self.trees)
        return float(out[0]) if single else out

    @property
    def importance(self):
        """Summed SSE reduction per feature, normalised to 1 (zeros if no split)."""
        imp = np.zeros(self.n_features)
        for t in self.trees:
            split = t.feature >= 0
            np.add.at(imp, t.feature[split], t.gain[split])
        total = imp.sum()
        return imp / total if total > 0 else imp

    def to_dict(self):
        return {
            "format": "fatigue_merf.forest",
            "version": FORMAT_VERSION,
            "params": asdict(self.params),
            "n_features": self.n_features,
            "offset": self.offset,
            "trees": [t.to_dict() for t in self.trees],
            "importance": self.importance.tolist(),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {doc.get('version')!r}")
        forest = cls(ForestParams(**doc["params"]))
        forest.n_features = doc["n_features"]
        forest.offset = float(doc["offset"])
        forest.trees = [Tree.from_dict(t) for t in doc["trees"]]
        forest._pack()
        return forest

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def fit_forest(X, y, params=None, threads=1):
    return RandomForest(params).fit(X, y, threads=threads)
