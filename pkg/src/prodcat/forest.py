"""Random forest: bagged Gini trees with log2 feature sampling per node and OOB scoring."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from prodcat.errors import PipelineError
from prodcat.knn import vocabulary

# impurities closer than this are ties; ties go to the lower feature, then lower threshold
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 50
    max_depth: int = 9
    max_features: str = "log2"
    oob_score: bool = True
    random_state: int = 411
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise PipelineError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.max_depth < 1:
            raise PipelineError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.max_features != "log2":
            raise PipelineError(f"unsupported max_features {self.max_features!r}; only 'log2' is available")
        if self.n_jobs < 1:
            raise PipelineError(f"n_jobs must be >= 1, got {self.n_jobs}")


class Split(NamedTuple):
    feature: int
    threshold: float
    impurity: float


@dataclass
class Tree:
    """Array-backed binary tree. ``feature[i] == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left. ``value`` holds class
    counts for classification trees and leaf weights for boosted trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.intp),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.intp),
            np.array(d["right"], dtype=np.intp),
            np.array(d["value"], dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.intp),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.intp),
            np.array(self.right, dtype=np.intp),
            np.array(self.value, dtype=np.float64),
        )


def gini(class_counts) -> float:
    c = np.asarray(class_counts, dtype=np.float64)
    n = c.sum()
    if n <= 0:
        raise PipelineError("gini impurity is undefined for an empty node")
    return float(1.0 - ((c / n) ** 2).sum())


def midpoint(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    # adjacent floats: the midpoint can round up onto b
    return a if mid >= b else mid


def best_split(X, y, feature_subset: Sequence[int], n_classes: int | None = None) -> Split | None:
    """Gini-minimising split over midpoints between consecutive distinct values.

    ``y`` holds class indices. Returns ``None`` for a pure node or when no
    candidate feature separates the rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    n = len(y)
    if n < 2 or len(feature_subset) == 0:
        return None
    K = n_classes or int(y.max()) + 1
    total = np.bincount(y, minlength=K).astype(np.float64)
    if (total > 0).sum() <= 1:
        return None
    onehot = np.eye(K)[y]
    best: Split | None = None
    for f in sorted(int(f) for f in feature_subset):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[cut]
        right = total - left
        n_l = (cut + 1).astype(np.float64)
        n_r = n - n_l
        g_l = 1.0 - ((left / n_l[:, None]) ** 2).sum(axis=1)
        g_r = 1.0 - ((right / n_r[:, None]) ** 2).sum(axis=1)
        imp = n_l / n * g_l + n_r / n * g_r
        i = int(np.argmin(imp))
        i = int(np.flatnonzero(imp <= imp[i] + TIE_TOL)[0])
        if best is None or imp[i] < best.impurity - TIE_TOL:
            best = Split(f, midpoint(xs[cut[i]], xs[cut[i] + 1]), float(imp[i]))
    return best


def n_split_features(n_features: int) -> int:
    return max(1, int(math.floor(math.log2(n_features)))) if n_features > 1 else 1


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int, rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    m = n_split_features(d)
    b = _TreeBuilder()
    root = b.add(np.bincount(y, minlength=n_classes))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < 2:
            continue
        subset = np.sort(rng.choice(d, size=m, replace=False))
        split = best_split(X[rows], y[rows], subset, n_classes)
        if split is None:
            continue
        go_left = X[rows, split.feature] <= split.threshold
        l_rows, r_rows = rows[go_left], rows[~go_left]
        b.split(node, split.feature, split.threshold)
        b.left[node] = b.add(np.bincount(y[l_rows], minlength=n_classes))
        b.right[node] = b.add(np.bincount(y[r_rows], minlength=n_classes))
        stack.append((b.right[node], r_rows, depth + 1))
        stack.append((b.left[node], l_rows, depth + 1))
    return b.build()


@dataclass
class ForestModel:
    params: ForestParams
    trees: list[Tree]
    bootstraps: list[np.ndarray]
    label_vocab: tuple[str, ...]
    n_features: int
    oob_score_value: float | None = None

    kind = "forest"

    def predict(self, X, threads: int = 1) -> np.ndarray:
        return predict_forest(self, X)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "kind": self.kind,
            "params": {
                "max_depth": p.max_depth,
                "max_features": p.max_features,
                "n_estimators": p.n_estimators,
                "n_jobs": p.n_jobs,
                "oob_score": p.oob_score,
                "random_state": p.random_state,
            },
            "label_vocab": list(self.label_vocab),
            "n_features": self.n_features,
            "oob_score_value": self.oob_score_value,
            "trees": [t.to_dict() for t in self.trees],
            "bootstraps": [b.tolist() for b in self.bootstraps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            ForestParams(**d["params"]),
            [Tree.from_dict(t) for t in d["trees"]],
            [np.array(b, dtype=np.intp) for b in d["bootstraps"]],
            tuple(d["label_vocab"]),
            int(d["n_features"]),
            d["oob_score_value"],
        )


def _tree_votes(tree: Tree, X: np.ndarray) -> np.ndarray:
    return np.argmax(tree.value[tree.apply(X)], axis=1)


def _majority(votes: np.ndarray, n_classes: int) -> np.ndarray:
    """Row-wise most common class in ``votes`` (trees x rows); -1 entries are ignored."""
    tally = np.zeros((votes.shape[1], n_classes), dtype=np.intp)
    for row in votes:
        ok = row >= 0
        tally[np.flatnonzero(ok), row[ok]] += 1
    return np.argmax(tally, axis=1), tally.sum(axis=1)


def fit_forest(X, y, params: ForestParams | None = None, threads: int | None = None) -> ForestModel:
    """Bagged Gini trees; tree ``t`` is seeded from ``(random_state, t)`` so the
    result does not depend on ``n_jobs``."""
    params = params or ForestParams()
    X = np.array(X, dtype=np.float64, ndmin=2)
    y = list(y)
    if X.shape[0] == 0:
        raise PipelineError("cannot fit a forest on empty data")
    if X.shape[0] != len(y):
        raise PipelineError(f"{X.shape[0]} rows but {len(y)} labels")
    vocab, yi = vocabulary(y)
    K, n = len(vocab), X.shape[0]

    def one_tree(t: int):
        rng = np.random.default_rng([params.random_state, t])
        boot = rng.integers(0, n, size=n)
        return grow_tree(X[boot], yi[boot], K, params.max_depth, rng), np.sort(boot)

    workers = threads or params.n_jobs
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            grown = list(pool.map(one_tree, range(params.n_estimators)))
    else:
        grown = [one_tree(t) for t in range(params.n_estimators)]
    trees = [g[0] for g in grown]
    boots = [g[1] for g in grown]

    oob = None
    if params.oob_score:
        votes = np.full((len(trees), n), -1, dtype=np.intp)
        for t, (tree, boot) in enumerate(zip(trees, boots)):
            out = np.ones(n, dtype=bool)
            out[boot] = False
            if out.any():
                votes[t, out] = _tree_votes(tree, X[out])
        pred, counts = _majority(votes, K)
        seen = counts > 0
        if seen.any():
            oob = float(np.mean(pred[seen] == yi[seen]))
    return ForestModel(params, trees, boots, tuple(vocab), X.shape[1], oob)


def predict_forest(model: ForestModel, X) -> np.ndarray:
    """Majority vote of the trees' leaf argmax classes; vote ties go to the
    lower vocabulary index."""
    X = np.array(X, dtype=np.float64, ndmin=2)
    if X.shape[0] == 0:
        return np.array([], dtype=object)
    if X.shape[1] != model.n_features:
        raise PipelineError(f"width mismatch: model expects {model.n_features} features, got {X.shape[1]}")
    votes = np.stack([_tree_votes(t, X) for t in model.trees])
    pred, _ = _majority(votes, len(model.label_vocab))
    return np.array(model.label_vocab, dtype=object)[pred]
