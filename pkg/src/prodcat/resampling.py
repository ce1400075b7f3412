"""Class rebalancing: SMOTE oversampling combined with random undersampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from prodcat.errors import PipelineError

DEFAULT_SMOTE_K = 5
POLICIES = ("median",)


@dataclass(frozen=True)
class RebalancePlan:
    targets: dict
    smote_k: int = DEFAULT_SMOTE_K
    seed: int = 0

    def __post_init__(self):
        if self.smote_k < 1:
            raise PipelineError(f"smote_k must be >= 1, got {self.smote_k}")
        bad = {c: t for c, t in self.targets.items() if t < 1}
        if bad:
            raise PipelineError(f"plan target counts must be >= 1: {bad}")


@dataclass(frozen=True)
class SyntheticSample:
    features: np.ndarray
    label: object
    base_index: int
    neighbor_index: int
    lam: float


def median_count(counts: Sequence[int]) -> int:
    """Median class size, rounded down for an even number of classes."""
    s = sorted(counts)
    mid = len(s) // 2
    if len(s) % 2:
        return int(s[mid])
    return int(math.floor((s[mid - 1] + s[mid]) / 2))


def plan_targets(class_counts: Mapping, policy: str = "median", smote_k: int = DEFAULT_SMOTE_K, seed: int = 0) -> RebalancePlan:
    """Every class is pulled to the median class size; singleton classes stay at 1
    because SMOTE needs two same-class points."""
    if not class_counts:
        raise PipelineError("cannot plan a rebalance for an empty class map")
    if policy not in POLICIES:
        raise PipelineError(f"unknown rebalance policy {policy!r}; expected one of {POLICIES}")
    target = max(1, median_count(list(class_counts.values())))
    return RebalancePlan({c: (1 if n == 1 else target) for c, n in class_counts.items()}, smote_k, seed)


def _class_seed(seed: int, label_pos: int) -> np.random.Generator:
    return np.random.default_rng([seed, label_pos])


def class_neighbours(Xc: np.ndarray, k: int) -> np.ndarray:
    """For each row of ``Xc`` the indices of its ``min(k, n-1)`` nearest other rows
    (Euclidean), ties broken by lower index."""
    n = Xc.shape[0]
    kk = min(k, n - 1)
    out = np.empty((n, kk), dtype=np.intp)
    for i in range(n):
        d = np.sqrt(((Xc - Xc[i]) ** 2).sum(axis=1))
        d[i] = np.inf
        out[i] = np.argsort(d, kind="stable")[:kk]
    return out


def smote_oversample(X, y, cls, n_new: int, k: int = DEFAULT_SMOTE_K, seed=0) -> list[SyntheticSample]:
    """Generate ``n_new`` points on segments between class members and their
    nearest same-class neighbours.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if k < 1:
        raise PipelineError(f"SMOTE k must be >= 1, got {k}")
    members = np.flatnonzero(y == cls)
    if members.size < 2:
        raise PipelineError(f"class {cls!r} has {members.size} rows; SMOTE needs at least 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Xc = X[members]
    nbrs = class_neighbours(Xc, k)
    out = []
    for _ in range(n_new):
        base = int(rng.integers(members.size))
        nb = int(nbrs[base, int(rng.integers(nbrs.shape[1]))])
        lam = float(rng.random())
        feats = Xc[base] + lam * (Xc[nb] - Xc[base])
        out.append(SyntheticSample(feats, cls, int(members[base]), int(members[nb]), lam))
    return out


def random_undersample(X, y, cls, target: int, seed=0) -> np.ndarray:
    """Sorted row indices of a uniform random size-``target`` subset of class ``cls``."""
    y = np.asarray(y)
    members = np.flatnonzero(y == cls)
    if target < 1:
        raise PipelineError(f"undersample target must be >= 1, got {target}")
    if target > members.size:
        raise PipelineError(f"undersample target {target} exceeds class {cls!r} count {members.size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return np.sort(rng.choice(members, size=target, replace=False))


def rebalance(X, y, plan: RebalancePlan, return_samples: bool = False):
    """Resample so the class histogram equals ``plan.targets`` exactly.

    Retained original rows come first in input order, synthetic rows follow
    in generation order (classes in order of first appearance).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    labels = list(dict.fromkeys(y.tolist()))
    missing = [c for c in labels if c not in plan.targets]
    if missing:
        raise PipelineError(f"rebalance plan has no target for classes {missing}")

    keep = np.ones(len(y), dtype=bool)
    synthetic: list[SyntheticSample] = []
    for pos, cls in enumerate(labels):
        rng = _class_seed(plan.seed, pos)
        members = np.flatnonzero(y == cls)
        target = plan.targets[cls]
        if members.size > target:
            kept = random_undersample(X, y, cls, target, rng)
            drop = np.setdiff1d(members, kept)
            keep[drop] = False
        elif members.size < target:
            synthetic.extend(smote_oversample(X, y, cls, target - members.size, plan.smote_k, rng))

    X_out, y_out = X[keep], y[keep]
    if synthetic:
        X_out = np.vstack([X_out, np.array([s.features for s in synthetic])])
        y_out = np.concatenate([y_out, np.array([s.label for s in synthetic], dtype=y.dtype)])
    if return_samples:
        return X_out, y_out, synthetic
    return X_out, y_out


def histogram(y) -> dict:
    labels, counts = np.unique(np.asarray(y), return_counts=True)
    return {lab.item() if hasattr(lab, "item") else lab: int(c) for lab, c in zip(labels, counts)}
