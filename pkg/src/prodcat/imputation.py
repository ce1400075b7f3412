"""Fast KNN imputation over mutually observed features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prodcat.errors import PipelineError

DEFAULT_K = 5
# candidate pool for the fast path is max(4k, MIN_POOL); below that many
# reference rows the search is exhaustive
MIN_POOL = 64
_BLOCK = 256


@dataclass(frozen=True)
class MaskedMatrix:
    values: np.ndarray
    mask: np.ndarray  # True = missing

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise PipelineError(f"values {values.shape} and mask {mask.shape} must be equal 2-D shapes")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def partial_distance(a, b, mask_a, mask_b) -> float:
    """Manhattan distance over coordinates observed in both rows, rescaled by
    ``width / n_shared``. Infinite when the rows share no observed coordinate."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise PipelineError(f"row width mismatch: {a.shape} vs {b.shape}")
    both = ~np.asarray(mask_a, dtype=bool) & ~np.asarray(mask_b, dtype=bool)
    shared = int(both.sum())
    if shared == 0:
        return float("inf")
    return float(np.abs(a[both] - b[both]).sum() * (a.size / shared))


def _partial_distances(row, row_obs, ref_values, ref_obs) -> np.ndarray:
    both = ref_obs & row_obs
    diff = np.where(both, np.abs(ref_values - row), 0.0).sum(axis=1)
    shared = both.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = diff * (row.size / shared)
    out[shared == 0] = np.inf
    return out


@dataclass(frozen=True)
class KnnImputer:
    reference: MaskedMatrix
    k: int
    column_means: np.ndarray

    @property
    def pool(self) -> int:
        return max(4 * self.k, MIN_POOL)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "shape": list(self.reference.shape),
            "values": np.where(self.reference.mask, 0.0, self.reference.values).ravel().tolist(),
            "missing": np.flatnonzero(self.reference.mask.ravel()).tolist(),
            "column_means": self.column_means.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnImputer":
        shape = tuple(d["shape"])
        values = np.array(d["values"], dtype=np.float64).reshape(shape)
        mask = np.zeros(shape[0] * shape[1], dtype=bool)
        mask[np.array(d["missing"], dtype=np.intp)] = True
        return cls(MaskedMatrix(values, mask.reshape(shape)), int(d["k"]), np.array(d["column_means"], dtype=np.float64))


def fit_imputer(train: MaskedMatrix, k: int = DEFAULT_K) -> KnnImputer:
    if k < 1:
        raise PipelineError(f"imputer k must be >= 1, got {k}")
    observed = ~train.mask
    counts = observed.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise PipelineError(
            f"columns {empty.tolist()} have no observed values; drop them upstream or lower the missing rate"
        )
    sums = np.where(observed, train.values, 0.0).sum(axis=0)
    return KnnImputer(train, k, sums / counts)


def _candidates(imp: KnnImputer, target: MaskedMatrix, rows: np.ndarray, exclude_self: bool) -> np.ndarray:
    """Indices of the ``pool`` reference rows closest to each target row under
    squared Euclidean distance to the mean-completed reference, taken over the
    target row's observed coordinates only (its masked cells carry no signal)."""
    ref = np.where(imp.reference.mask, imp.column_means, imp.reference.values)
    obs = ~target.mask[rows]
    q = np.where(obs, target.values[rows], 0.0)
    d = (q * q).sum(axis=1)[:, None] + obs.astype(np.float64) @ (ref * ref).T - 2.0 * q @ ref.T
    if exclude_self:
        d[np.arange(len(rows)), rows] = np.inf
    pool = imp.pool
    part = np.argpartition(d, pool - 1, axis=1)[:, :pool]
    return np.sort(part, axis=1)


def neighbours(imp: KnnImputer, target: MaskedMatrix, i: int, exclude_self: bool = False, exact: bool = False) -> np.ndarray:
    """The up-to-k reference rows used to fill row ``i`` of ``target``, nearest first."""
    return _neighbour_lists(imp, target, np.array([i]), exclude_self, exact)[0]


def _neighbour_lists(imp, target, rows, exclude_self, exact):
    ref_values, ref_obs = imp.reference.values, ~imp.reference.mask
    n_ref = ref_values.shape[0]
    use_pool = not exact and n_ref > imp.pool + int(exclude_self)
    out = []
    for start in range(0, len(rows), _BLOCK):
        block = rows[start : start + _BLOCK]
        cands = _candidates(imp, target, block, exclude_self) if use_pool else None
        for r, i in enumerate(block):
            idx = cands[r] if use_pool else np.arange(n_ref)
            if exclude_self:
                idx = idx[idx != i]
            dist = _partial_distances(target.values[i], ~target.mask[i], ref_values[idx], ref_obs[idx])
            order = np.lexsort((idx, dist))
            chosen = idx[order][np.isfinite(dist[order])][: imp.k]
            out.append(chosen)
    return out


def impute(imp: KnnImputer, target: MaskedMatrix, exclude_self: bool = False, exact: bool = False) -> np.ndarray:
    """Fill every masked cell of ``target``.

    A cell becomes the mean of that column over the k nearest reference rows
    that observe it, or the column mean when none do. Observed cells are
    returned untouched. Pass ``exclude_self=True`` when ``target`` is the
    reference matrix itself.
    """
    ref = imp.reference
    if target.shape[1] != ref.shape[1]:
        raise PipelineError(f"width mismatch: target has {target.shape[1]} columns, reference {ref.shape[1]}")
    if exclude_self and target.shape[0] != ref.shape[0]:
        raise PipelineError("exclude_self requires the target to be the reference matrix")
    out = np.where(target.mask, 0.0, target.values)
    rows = np.flatnonzero(target.mask.any(axis=1))
    if rows.size == 0:
        return out
    lists = _neighbour_lists(imp, target, rows, exclude_self, exact)
    ref_obs = ~ref.mask
    for i, nb in zip(rows, lists):
        cols = np.flatnonzero(target.mask[i])
        if nb.size:
            obs = ref_obs[np.ix_(nb, cols)]
            n_obs = obs.sum(axis=0)
            sums = np.where(obs, ref.values[np.ix_(nb, cols)], 0.0).sum(axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                fill = np.where(n_obs > 0, sums / n_obs, imp.column_means[cols])
        else:
            fill = imp.column_means[cols]
        out[i, cols] = fill
    return out
