"""Brute-force k-nearest-neighbours classifier under the Manhattan metric."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from prodcat.errors import PipelineError

_BLOCK = 64


@dataclass(frozen=True)
class KnnParams:
    metric: str = "manhattan"
    n_neighbors: int = 1

    def __post_init__(self):
        if self.metric != "manhattan":
            raise PipelineError(f"unsupported metric {self.metric!r}; only 'manhattan' is available")
        if self.n_neighbors < 1:
            raise PipelineError(f"n_neighbors must be >= 1, got {self.n_neighbors}")


@dataclass(frozen=True)
class KnnModel:
    params: KnnParams
    train_X: np.ndarray
    train_y: np.ndarray  # indices into label_vocab
    label_vocab: tuple[str, ...]

    kind = "knn"

    @property
    def n_features(self) -> int:
        return self.train_X.shape[1]

    def predict(self, X, threads: int = 1) -> np.ndarray:
        return predict_knn(self, X, threads)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {"metric": self.params.metric, "n_neighbors": self.params.n_neighbors},
            "label_vocab": list(self.label_vocab),
            "train_shape": list(self.train_X.shape),
            "train_X": self.train_X.ravel().tolist(),
            "train_y": self.train_y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        X = np.array(d["train_X"], dtype=np.float64).reshape(tuple(d["train_shape"]))
        return cls(KnnParams(**d["params"]), X, np.array(d["train_y"], dtype=np.intp), tuple(d["label_vocab"]))


def manhattan(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise PipelineError(f"vector length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def vocabulary(y) -> tuple[list[str], np.ndarray]:
    """Labels in first-appearance order and the index of each row's label."""
    vocab = list(dict.fromkeys(str(v) for v in y))
    pos = {lab: i for i, lab in enumerate(vocab)}
    return vocab, np.array([pos[str(v)] for v in y], dtype=np.intp)


def fit_knn(X, y, params: KnnParams | None = None) -> KnnModel:
    """Store the training data verbatim."""
    params = params or KnnParams()
    X = np.array(X, dtype=np.float64, ndmin=2)
    y = list(y)
    if X.shape[0] == 0 or not y:
        raise PipelineError("cannot fit KNN on an empty training set")
    if X.shape[0] != len(y):
        raise PipelineError(f"{X.shape[0]} rows but {len(y)} labels")
    if any(not str(v) for v in y):
        raise PipelineError("labels must be non-empty strings")
    vocab, idx = vocabulary(y)
    X.setflags(write=False)
    return KnnModel(params, X, idx, tuple(vocab))


def _predict_block(model: KnnModel, Q: np.ndarray) -> np.ndarray:
    k = min(model.params.n_neighbors, model.train_X.shape[0])
    n_vocab = len(model.label_vocab)
    # (block, n_train) distance matrix, one feature at a time to bound memory
    dist = np.zeros((Q.shape[0], model.train_X.shape[0]))
    for j in range(Q.shape[1]):
        dist += np.abs(Q[:, j, None] - model.train_X[None, :, j])
    if k == 1:
        return model.train_y[np.argmin(dist, axis=1)]
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    votes = np.zeros((Q.shape[0], n_vocab), dtype=np.intp)
    np.add.at(votes, (np.repeat(np.arange(Q.shape[0]), k), model.train_y[nearest].ravel()), 1)
    return np.argmax(votes, axis=1)


def predict_knn(model: KnnModel, X, threads: int = 1) -> np.ndarray:
    """Majority label among the ``n_neighbors`` nearest training rows.

    Distance ties go to the lower training index, vote ties to the label
    that appears first in the vocabulary.
    """
    X = np.array(X, dtype=np.float64, ndmin=2)
    if X.shape[0] == 0:
        return np.array([], dtype=object)
    if X.shape[1] != model.n_features:
        raise PipelineError(f"width mismatch: model expects {model.n_features} features, got {X.shape[1]}")
    blocks = [X[s : s + _BLOCK] for s in range(0, X.shape[0], _BLOCK)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: _predict_block(model, b), blocks))
    else:
        parts = [_predict_block(model, b) for b in blocks]
    idx = np.concatenate(parts)
    return np.array(model.label_vocab, dtype=object)[idx]
