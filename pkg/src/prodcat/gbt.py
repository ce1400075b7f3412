"""Gradient-boosted regression trees with the multiclass softmax-probability objective.

Each round fits one tree per class to the softmax cross-entropy gradient and
Hessian, choosing splits by exact greedy enumeration of every distinct
feature value under the second-order gain, and adds the learning-rate scaled
leaf weights to that class's raw margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from prodcat.errors import PipelineError
from prodcat.forest import Tree, _TreeBuilder, midpoint
from prodcat.knn import vocabulary

HESS_FLOOR = 1e-16
# gains within this relative distance of the best are ties, resolved to the
# lower feature index and then the lower threshold
TIE_TOL = 1e-9

OBJECTIVES = ("multi:softprob",)
EVAL_METRICS = ("error",)
TREE_METHODS = ("auto", "exact")
PREDICTORS = ("auto",)


@dataclass(frozen=True)
class GbtParams:
    eval_metric: str = "error"
    learning_rate: float = 0.3
    min_split_loss: float = 0.1
    objective: str = "multi:softprob"
    predictor: str = "auto"
    tree_method: str = "auto"
    n_rounds: int = 100
    max_depth: int = 6
    reg_lambda: float = 1.0

    def __post_init__(self):
        checks = [
            (self.objective in OBJECTIVES, f"objective must be one of {OBJECTIVES}"),
            (self.eval_metric in EVAL_METRICS, f"eval_metric must be one of {EVAL_METRICS}"),
            (self.tree_method in TREE_METHODS, f"tree_method must be one of {TREE_METHODS}"),
            (self.predictor in PREDICTORS, f"predictor must be one of {PREDICTORS}"),
            (self.learning_rate > 0, f"learning_rate must be > 0, got {self.learning_rate}"),
            (self.min_split_loss >= 0, f"min_split_loss must be >= 0, got {self.min_split_loss}"),
            (self.reg_lambda >= 0, f"reg_lambda must be >= 0, got {self.reg_lambda}"),
            (self.n_rounds >= 1, f"n_rounds must be >= 1, got {self.n_rounds}"),
            (self.max_depth >= 1, f"max_depth must be >= 1, got {self.max_depth}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise PipelineError(msg)

    def to_dict(self) -> dict:
        return {
            "eval_metric": self.eval_metric,
            "learning_rate": self.learning_rate,
            "min_split_loss": self.min_split_loss,
            "objective": self.objective,
            "predictor": self.predictor,
            "tree_method": self.tree_method,
            "n_rounds": self.n_rounds,
            "max_depth": self.max_depth,
            "reg_lambda": self.reg_lambda,
        }


# ----------------------------------------------------------------- numerics


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise PipelineError("softmax input contains non-finite values")
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def grad_hess(p, y: int) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of ``-log p_y`` with respect to the raw scores."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise PipelineError("grad_hess expects a probability vector")
    if not 0 <= y < p.size:
        raise PipelineError(f"class index {y} out of range for {p.size} classes")
    g = p.copy()
    g[y] -= 1.0
    h = np.maximum(p * (1.0 - p), HESS_FLOOR)
    return g, h


def leaf_weight(G: float, H: float, lam: float) -> float:
    if not H + lam > 0:
        raise PipelineError(f"degenerate leaf: H + lambda = {H + lam}")
    return -G / (H + lam)


def split_gain(GL: float, HL: float, GR: float, HR: float, lam: float, gamma: float) -> float:
    if not (HL + lam > 0 and HR + lam > 0):
        raise PipelineError("degenerate split: child Hessian + lambda must be positive")
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma


def log_loss(P: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(np.log(np.maximum(P[np.arange(len(y)), y], 1e-300))))


# ------------------------------------------------------------- split search


class RankIndex:
    """Each column's values replaced by their rank among the column's distinct
    values, laid out in one flat bin space (feature-major) so a single
    ``bincount`` gives per-node, per-value gradient sums for every feature."""

    def __init__(self, X: np.ndarray):
        self.X = X
        n, d = X.shape
        self.uniques = []
        ranks = np.empty((n, d), dtype=np.int64)
        for j in range(d):
            u, inv = np.unique(X[:, j], return_inverse=True)
            self.uniques.append(u)
            ranks[:, j] = inv
        sizes = np.array([len(u) for u in self.uniques], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.ends = self.offsets + sizes
        self.n_bins = int(sizes.sum())
        self.bin_feature = np.repeat(np.arange(d), sizes)
        self.flat = ranks + self.offsets[None, :]


class NodeSplit(NamedTuple):
    gain: float
    feature: int
    threshold: float


def _scan(index: RankIndex, rows: np.ndarray, local: np.ndarray, n_nodes: int, g, h, lam, gamma) -> list[NodeSplit | None]:
    """Best split per node for the rows in ``rows`` (``local`` gives each row's node).

    Works on the non-empty (node, feature value) bins only: their flat keys
    come out sorted by node, then feature, then value, so a left-to-right
    running sum restarted at each (node, feature) segment gives the left-child
    statistics of every candidate threshold.
    """
    U = index.n_bins
    d = index.flat.shape[1]
    keys = (local[:, None] * U + index.flat[rows]).ravel()
    size = n_nodes * U
    counts = np.bincount(keys, minlength=size)
    nz = np.flatnonzero(counts)
    Gs = np.bincount(keys, weights=np.repeat(g[rows], d), minlength=size)[nz]
    Hs = np.bincount(keys, weights=np.repeat(h[rows], d), minlength=size)[nz]
    Cs = counts[nz]
    node = nz // U
    bins = nz - node * U
    segment = node * d + index.bin_feature[bins]
    starts = np.flatnonzero(np.r_[True, segment[1:] != segment[:-1]])
    seg_of = np.cumsum(np.r_[True, segment[1:] != segment[:-1]]) - 1

    def running(a, dtype):
        # extended precision keeps the restart-by-subtraction error far below the tie tolerance
        cs = np.cumsum(a, dtype=dtype)
        before = np.where(starts > 0, cs[starts - 1], 0)
        return (cs - before[seg_of]).astype(a.dtype)

    GL, HL, CL = running(Gs, np.longdouble), running(Hs, np.longdouble), running(Cs, np.int64)
    G_tot = np.bincount(local, weights=g[rows], minlength=n_nodes)
    H_tot = np.bincount(local, weights=h[rows], minlength=n_nodes)
    C_tot = np.bincount(local, minlength=n_nodes)
    GR, HR = G_tot[node] - GL, H_tot[node] - HL
    valid = CL < C_tot[node]
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma
    gain = np.where(valid, gain, -np.inf)

    out: list[NodeSplit | None] = [None] * n_nodes
    node_start = np.searchsorted(node, np.arange(n_nodes + 1))
    for l in range(n_nodes):
        lo, hi = node_start[l], node_start[l + 1]
        if lo == hi:
            continue
        seg = gain[lo:hi]
        best = seg.max()
        if not np.isfinite(best):
            continue
        i = lo + int(np.argmax(seg >= best - TIE_TOL * max(1.0, abs(best))))
        f = int(index.bin_feature[bins[i]])
        u = index.uniques[f]
        # valid => the next non-empty bin is in the same (node, feature) segment
        thr = midpoint(u[bins[i] - index.offsets[f]], u[bins[i + 1] - index.offsets[f]])
        out[l] = NodeSplit(float(gain[i]), f, thr)
    return out


def best_gain_split(X, g, h, lam: float, gamma: float) -> NodeSplit | None:
    """Highest-gain split of a single node holding all rows of ``X``.

    Returns ``None`` when no threshold separates the rows. The gain may be
    non-positive; callers accept a split only when it is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    index = RankIndex(X)
    rows = np.arange(X.shape[0])
    return _scan(index, rows, np.zeros(len(rows), dtype=np.int64), 1, np.asarray(g, float), np.asarray(h, float), lam, gamma)[0]


def grow_regression_tree(index: RankIndex, g: np.ndarray, h: np.ndarray, params: GbtParams) -> tuple[Tree, np.ndarray]:
    """Level-wise exact greedy tree on (g, h). Returns the tree and each row's leaf."""
    n = len(g)
    lam, gamma = params.reg_lambda, params.min_split_loss
    b = _TreeBuilder()
    root = b.add(0.0)
    node_of = np.zeros(n, dtype=np.intp)
    frontier = [root]
    for _ in range(params.max_depth):
        lookup = np.full(len(b.feature), -1, dtype=np.int64)
        lookup[frontier] = np.arange(len(frontier))
        local = lookup[node_of]
        rows = np.flatnonzero(local >= 0)
        if rows.size == 0:
            break
        splits = _scan(index, rows, local[rows], len(frontier), g, h, lam, gamma)
        nxt = []
        for node, s in zip(frontier, splits):
            if s is None or not s.gain > 0:
                continue
            b.split(node, s.feature, s.threshold)
            b.left[node] = b.add(0.0)
            b.right[node] = b.add(0.0)
            nxt += [b.left[node], b.right[node]]
        if not nxt:
            break
        feature = np.array(b.feature)
        moved = rows[feature[node_of[rows]] >= 0]
        nodes = node_of[moved]
        go_left = index.X[moved, feature[nodes]] <= np.array(b.threshold)[nodes]
        node_of[moved] = np.where(go_left, np.array(b.left)[nodes], np.array(b.right)[nodes])
        frontier = nxt
    G = np.bincount(node_of, weights=g, minlength=len(b.feature))
    H = np.bincount(node_of, weights=h, minlength=len(b.feature))
    for i in range(len(b.feature)):
        if b.feature[i] < 0:
            b.value[i] = leaf_weight(G[i], H[i], lam)
    return b.build(), node_of


# ------------------------------------------------------------------ model


@dataclass
class GbtModel:
    params: GbtParams
    label_vocab: tuple[str, ...]
    trees: list[list[Tree]]  # rounds x classes
    n_features: int
    base_score: float = 0.0
    history: dict = field(default_factory=dict)

    kind = "gbt"

    @property
    def n_splits(self) -> int:
        return sum(t.n_splits for rnd in self.trees for t in rnd)

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        scores = np.full((X.shape[0], len(self.label_vocab)), self.base_score)
        eta = self.params.learning_rate
        for rnd in self.trees:
            for k, tree in enumerate(rnd):
                scores[:, k] += eta * tree.value[tree.apply(X)]
        return scores

    def predict(self, X, threads: int = 1) -> np.ndarray:
        return predict_gbt(self, X)[0]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "label_vocab": list(self.label_vocab),
            "n_features": self.n_features,
            "base_score": self.base_score,
            "history": self.history,
            "trees": [[t.to_dict() for t in rnd] for rnd in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls(
            GbtParams(**d["params"]),
            tuple(d["label_vocab"]),
            [[Tree.from_dict(t) for t in rnd] for rnd in d["trees"]],
            int(d["n_features"]),
            float(d["base_score"]),
            d.get("history", {}),
        )


def fit_gbt(X, y, params: GbtParams | None = None) -> GbtModel:
    """Boost ``n_rounds`` rounds of one regression tree per class.

    ``history`` records the training ``error`` (1 - argmax accuracy) and
    multiclass log-loss after every round.
    """
    params = params or GbtParams()
    X = np.array(X, dtype=np.float64, ndmin=2)
    y = list(y)
    if X.shape[0] == 0:
        raise PipelineError("cannot fit boosted trees on empty data")
    if X.shape[0] != len(y):
        raise PipelineError(f"{X.shape[0]} rows but {len(y)} labels")
    vocab, yi = vocabulary(y)
    K = len(vocab)
    if K < 2:
        raise PipelineError(f"boosted trees need at least 2 classes; labels are all {vocab[0]!r}")
    n = X.shape[0]
    index = RankIndex(X)
    onehot = np.eye(K)[yi]
    scores = np.zeros((n, K))
    eta = params.learning_rate
    trees, errors, losses = [], [], []
    for _ in range(params.n_rounds):
        P = softmax(scores)
        G = P - onehot
        H = np.maximum(P * (1.0 - P), HESS_FLOOR)
        rnd = []
        for k in range(K):
            tree, leaf = grow_regression_tree(index, G[:, k], H[:, k], params)
            scores[:, k] += eta * tree.value[leaf]
            rnd.append(tree)
        trees.append(rnd)
        P = softmax(scores)
        errors.append(float(np.mean(np.argmax(P, axis=1) != yi)))
        losses.append(log_loss(P, yi))
    history = {"error": errors, "log_loss": losses}
    return GbtModel(params, tuple(vocab), trees, X.shape[1], 0.0, history)


def predict_gbt(model: GbtModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels (argmax, ties to the lower vocabulary index) and the softmax probability matrix."""
    X = np.array(X, dtype=np.float64, ndmin=2)
    if X.shape[0] == 0:
        return np.array([], dtype=object), np.zeros((0, len(model.label_vocab)))
    if X.shape[1] != model.n_features:
        raise PipelineError(f"width mismatch: model expects {model.n_features} features, got {X.shape[1]}")
    P = softmax(model.raw_scores(X))
    return np.array(model.label_vocab, dtype=object)[np.argmax(P, axis=1)], P
