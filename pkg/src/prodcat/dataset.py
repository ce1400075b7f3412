"""Tabular product data: loading, saving, splitting and a synthetic catalog generator."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import string
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from prodcat.errors import PipelineError, SchemaError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

TARGETS = ("top_category", "bottom_category", "color")

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical_string"
    TEXT = "text"
    TARGET = "target"

    @property
    def is_string(self) -> bool:
        return self is not ColumnKind.NUMERIC


@dataclass(frozen=True)
class Schema:
    columns: tuple[tuple[str, ColumnKind], ...]

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in schema: {names}")
        for name, kind in self.columns:
            if name in TARGETS and kind is not ColumnKind.TARGET:
                raise SchemaError(f"column {name!r} is a target and must have kind 'target'")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str | ColumnKind]]) -> "Schema":
        return cls(tuple((name, ColumnKind(kind)) for name, kind in pairs))

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.columns]

    def kind(self, name: str) -> ColumnKind:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise SchemaError(f"no column named {name!r}")

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def feature_columns(self) -> list[tuple[str, ColumnKind]]:
        return [(n, k) for n, k in self.columns if k is not ColumnKind.TARGET]

    @property
    def target_columns(self) -> list[str]:
        return [n for n, k in self.columns if k is ColumnKind.TARGET]

    def require_targets(self) -> None:
        for name in TARGETS:
            if name not in self.names:
                raise SchemaError(f"training data is missing target column {name!r}")


class Dataset:
    """Column-major table with an explicit missingness mask.

    Numeric columns are float64 arrays, string columns object arrays of ``str``.
    Masked cells are normalised on construction (NaN / empty string) so their
    stored value carries no information.
    """

    def __init__(self, schema: Schema, columns: Mapping[str, Sequence], mask: np.ndarray | None = None):
        names = schema.names
        if set(columns) != set(names):
            raise SchemaError(f"columns {sorted(columns)} do not match schema {names}")
        lengths = {len(columns[n]) for n in names}
        if len(lengths) > 1:
            raise SchemaError(f"columns have unequal lengths {sorted(lengths)}")
        n_rows = lengths.pop() if lengths else 0
        if mask is None:
            mask = np.zeros((n_rows, len(names)), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n_rows, len(names)):
            raise SchemaError(f"mask shape {mask.shape} != {(n_rows, len(names))}")

        self.schema = schema
        self.mask = mask.copy()
        self.mask.setflags(write=False)
        self._columns: dict[str, np.ndarray] = {}
        for j, (name, kind) in enumerate(schema.columns):
            missing = self.mask[:, j]
            if kind is ColumnKind.NUMERIC:
                values = np.array(columns[name], dtype=np.float64)
                values[missing] = np.nan
            else:
                values = np.array(["" if m else str(v) for v, m in zip(columns[name], missing)], dtype=object)
            values.setflags(write=False)
            self._columns[name] = values

    @property
    def row_count(self) -> int:
        return self.mask.shape[0]

    def __len__(self) -> int:
        return self.row_count

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(f"no column named {name!r}") from None

    def missing(self, name: str) -> np.ndarray:
        return self.mask[:, self.schema.index(name)]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        cols = {name: self._columns[name][rows] for name in self.schema.names}
        return Dataset(self.schema, cols, self.mask[rows])

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or not np.array_equal(self.mask, other.mask):
            return False
        for name, kind in self.schema.columns:
            a, b = self._columns[name], other._columns[name]
            if kind is ColumnKind.NUMERIC:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif not np.array_equal(a, b):
                return False
        return True

    def rows(self) -> list[tuple]:
        """Row tuples with ``None`` for masked cells (used for multiset comparisons)."""
        out = []
        for i in range(self.row_count):
            row = []
            for j, name in enumerate(self.schema.names):
                row.append(None if self.mask[i, j] else self._columns[name][i])
            out.append(tuple(row))
        return out

    def __repr__(self) -> str:
        return f"Dataset(rows={self.row_count}, columns={self.schema.names})"


# --------------------------------------------------------------------------- io


def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".schema.toml")


def read_sidecar(path: str | os.PathLike) -> dict[str, ColumnKind]:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    kinds = {}
    for name, kind in raw.items():
        try:
            kinds[name] = ColumnKind(kind)
        except ValueError:
            raise SchemaError(f"{path}: unknown kind {kind!r} for column {name!r}") from None
    return kinds


def write_sidecar(schema: Schema, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, kind in schema.columns:
            fh.write(f"{json.dumps(name)} = {json.dumps(kind.value)}\n")


def _infer_kind(name: str, cells: list[str], missing: np.ndarray) -> ColumnKind:
    if name in TARGETS:
        return ColumnKind.TARGET
    observed = [c for c, m in zip(cells, missing) if not m]
    if observed and all(_DECIMAL.match(c.strip()) for c in observed):
        return ColumnKind.NUMERIC
    return ColumnKind.CATEGORICAL


def _build(names: list[str], raw: dict[str, list], mask: np.ndarray, kinds: Mapping[str, ColumnKind]) -> Dataset:
    pairs = []
    for j, name in enumerate(names):
        kind = kinds.get(name) or _infer_kind(name, raw[name], mask[:, j])
        pairs.append((name, kind))
    schema = Schema(tuple(pairs))
    cols = {}
    for j, (name, kind) in enumerate(schema.columns):
        if kind is ColumnKind.NUMERIC:
            vals = np.full(len(raw[name]), np.nan)
            for i, cell in enumerate(raw[name]):
                if not mask[i, j]:
                    try:
                        vals[i] = float(cell)
                    except (TypeError, ValueError):
                        raise PipelineError(f"row {i}, column {name!r}: {cell!r} is not numeric") from None
            cols[name] = vals
        else:
            cols[name] = ["" if mask[i, j] else str(c) for i, c in enumerate(raw[name])]
    return Dataset(schema, cols, mask)


def _load_csv(path: Path) -> tuple[list[str], dict[str, list], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PipelineError(f"{path}: empty file, expected a header row") from None
        body = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise PipelineError(f"{path}: ragged row {i} has {len(row)} fields, header has {len(header)}")
            body.append(row)
    raw = {name: [row[j] for row in body] for j, name in enumerate(header)}
    mask = np.array([[cell == "" for cell in row] for row in body], dtype=bool).reshape(len(body), len(header))
    return header, raw, mask


def _load_parquet(path: Path) -> tuple[list[str], dict[str, list], np.ndarray, dict[str, ColumnKind]]:
    try:
        import pyarrow.parquet as pq
        import pyarrow.types as pat
    except ImportError:
        raise PipelineError("parquet support needs the optional 'pyarrow' dependency") from None
    table = pq.read_table(path)
    names = table.column_names
    raw, kinds = {}, {}
    mask = np.zeros((table.num_rows, len(names)), dtype=bool)
    for j, name in enumerate(names):
        col = table.column(name)
        values = col.to_pylist()
        mask[:, j] = [v is None for v in values]
        raw[name] = ["" if v is None else v for v in values]
        if name in TARGETS:
            continue
        if pat.is_integer(col.type) or pat.is_floating(col.type):
            kinds[name] = ColumnKind.NUMERIC
        else:
            kinds[name] = ColumnKind.CATEGORICAL
    return names, raw, mask, kinds


def load_table(path: str | os.PathLike, format: str = "csv", schema: Mapping[str, ColumnKind] | None = None) -> Dataset:
    """Read a CSV or Parquet file.

    Empty CSV cells and Parquet nulls become masked cells. Column kinds come from
    ``schema``, else from a ``<path>.schema.toml`` sidecar, else are inferred.
    """
    path = Path(path)
    if format not in ("csv", "parquet"):
        raise PipelineError(f"unknown table format {format!r} (expected 'csv' or 'parquet')")
    if not path.is_file():
        raise PipelineError(f"cannot read {path}: no such file")
    kinds: dict[str, ColumnKind] = {}
    if format == "csv":
        names, raw, mask = _load_csv(path)
    else:
        names, raw, mask, kinds = _load_parquet(path)
    side = sidecar_path(path)
    if side.is_file():
        kinds.update(read_sidecar(side))
    if schema:
        kinds.update({k: ColumnKind(v) for k, v in schema.items()})
    unknown = set(kinds) - set(names)
    if unknown and schema:
        raise SchemaError(f"schema names columns not in {path}: {sorted(unknown)}")
    return _build(names, raw, mask, {k: v for k, v in kinds.items() if k in names})


def write_table(dataset: Dataset, path: str | os.PathLike, format: str = "csv", sidecar: bool = True) -> None:
    """Write ``dataset`` so that :func:`load_table` reproduces it exactly.

    Masked cells are written as empty fields; floats use their shortest
    round-trip representation. A schema sidecar preserves column kinds.
    """
    path = Path(path)
    if format == "parquet":
        _write_parquet(dataset, path)
    elif format == "csv":
        try:
            fh = open(path, "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise PipelineError(f"cannot write {path}: {exc}") from None
        with fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(dataset.schema.names)
            cols = [dataset.column(n) for n in dataset.schema.names]
            kinds = [k for _, k in dataset.schema.columns]
            for i in range(dataset.row_count):
                row = []
                for j, (values, kind) in enumerate(zip(cols, kinds)):
                    if dataset.mask[i, j]:
                        row.append("")
                    elif kind is ColumnKind.NUMERIC:
                        row.append(repr(float(values[i])))
                    else:
                        row.append(values[i])
                writer.writerow(row)
    else:
        raise PipelineError(f"unknown table format {format!r}")
    if sidecar:
        write_sidecar(dataset.schema, sidecar_path(path))


def _write_parquet(dataset: Dataset, path: Path) -> None:
    try:
        import pyarrow as pa
        import pyarrow.parquet as pq
    except ImportError:
        raise PipelineError("parquet support needs the optional 'pyarrow' dependency") from None
    arrays = {}
    for j, (name, kind) in enumerate(dataset.schema.columns):
        values = dataset.column(name)
        missing = dataset.mask[:, j]
        if kind is ColumnKind.NUMERIC:
            arrays[name] = pa.array([None if m else float(v) for v, m in zip(values, missing)], type=pa.float64())
        else:
            arrays[name] = pa.array([None if m else str(v) for v, m in zip(values, missing)], type=pa.string())
    pq.write_table(pa.table(arrays), path)


def split_rows(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint row partition; the first part has ``round(fraction * n)`` rows."""
    if not 0.0 < fraction < 1.0:
        raise PipelineError(f"split fraction must lie in (0, 1), got {fraction}")
    n = dataset.row_count
    n_first = int(math.floor(fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    first, second = np.sort(perm[:n_first]), np.sort(perm[n_first:])
    return dataset.take(first), dataset.take(second)


def drop_missing_targets(dataset: Dataset) -> Dataset:
    cols = [dataset.schema.index(t) for t in TARGETS if t in dataset.schema.names]
    if not cols:
        return dataset
    keep = ~dataset.mask[:, cols].any(axis=1)
    if keep.all():
        return dataset
    return dataset.take(np.flatnonzero(keep))


# -------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticConfig:
    n_rows: int = 2000
    n_top: int = 5
    bottoms_per_top: int = 5
    n_colors: int = 10
    zipf_exponent: float = 1.5
    missing_rate: float = 0.1
    noise_rate: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_top, self.bottoms_per_top, self.n_colors) < 1:
            raise PipelineError("n_top, bottoms_per_top and n_colors must be at least 1")
        if self.n_rows < self.n_top * self.bottoms_per_top:
            raise PipelineError(
                f"n_rows ({self.n_rows}) must be at least n_top * bottoms_per_top "
                f"({self.n_top * self.bottoms_per_top})"
            )
        if not self.zipf_exponent > 0:
            raise PipelineError(f"zipf_exponent must be positive, got {self.zipf_exponent}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise PipelineError(f"missing_rate must lie in [0, 1), got {self.missing_rate}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise PipelineError(f"noise_rate must lie in [0, 1], got {self.noise_rate}")


SYNTHETIC_SCHEMA = Schema.from_pairs(
    [
        ("title", "text"),
        ("price", "numeric"),
        ("weight", "numeric"),
        ("top_category", "target"),
        ("bottom_category", "target"),
        ("color", "target"),
    ]
)

# title construction: one word from the top class's vocabulary, then the
# fixed word template of one of the bottom class's product families, then the
# color name; families of a bottom class use disjoint words
_TOP_VOCAB = 6
_FAMILIES_PER_BOTTOM = 30
_FAMILY_TOKENS = 3
_NOISE_VOCAB = 400


def zipf_probabilities(n: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    return weights / weights.sum()


def sample_zipf(rng: np.random.Generator, n_classes: int, exponent: float, size: int) -> np.ndarray:
    """Inverse-CDF draws of class ranks ``0..n_classes-1`` with P(r) ~ 1/(r+1)^exponent."""
    cdf = np.cumsum(zipf_probabilities(n_classes, exponent))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right")


def _words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    letters = np.array(list(string.ascii_lowercase))
    out = []
    while len(out) < count:
        word = "".join(rng.choice(letters, size=int(rng.integers(4, 9))))
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Long-tail product catalog with a consistent top/bottom category hierarchy.

    Each bottom class owns many small product families (fixed word templates
    with no words in common), so bottom labels behave like a high-cardinality
    lookup while top labels share a small vocabulary. Title words are swapped
    for random noise words with probability ``noise_rate``. ``price`` and
    ``weight`` are Gaussian around a mean fixed per (top, color) pair. Every
    non-target cell is masked independently with probability ``missing_rate``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_rows

    taken: set[str] = set()
    top_names = [f"top_{i:02d}" for i in range(config.n_top)]
    bottom_names = [
        [f"{top_names[t]}_sub_{b:02d}" for b in range(config.bottoms_per_top)] for t in range(config.n_top)
    ]
    color_names = _words(rng, config.n_colors, taken)
    top_vocab = [_words(rng, _TOP_VOCAB, taken) for _ in range(config.n_top)]
    family_words = _FAMILIES_PER_BOTTOM * _FAMILY_TOKENS
    families = [
        [
            np.array(_words(rng, family_words, taken), dtype=object).reshape(_FAMILIES_PER_BOTTOM, _FAMILY_TOKENS).tolist()
            for _ in range(config.bottoms_per_top)
        ]
        for _ in range(config.n_top)
    ]
    noise_vocab = _words(rng, _NOISE_VOCAB, taken)
    means = rng.uniform(0.0, 1.0, size=(config.n_top, config.n_colors, 2))

    top = sample_zipf(rng, config.n_top, config.zipf_exponent, n)
    bottom = sample_zipf(rng, config.bottoms_per_top, config.zipf_exponent, n)
    color = sample_zipf(rng, config.n_colors, config.zipf_exponent, n)

    titles = []
    for i in range(n):
        t, b, c = top[i], bottom[i], color[i]
        tokens = [top_vocab[t][int(rng.integers(_TOP_VOCAB))]]
        tokens += families[t][b][int(rng.integers(_FAMILIES_PER_BOTTOM))]
        tokens.append(color_names[c])
        swap = rng.random(len(tokens)) < config.noise_rate
        for k in np.flatnonzero(swap):
            tokens[k] = noise_vocab[int(rng.integers(len(noise_vocab)))]
        titles.append(" ".join(tokens))

    numeric = means[top, color] + rng.normal(0.0, 0.1, size=(n, 2))

    columns = {
        "title": titles,
        "price": numeric[:, 0],
        "weight": numeric[:, 1],
        "top_category": [top_names[t] for t in top],
        "bottom_category": [bottom_names[t][b] for t, b in zip(top, bottom)],
        "color": [color_names[c] for c in color],
    }
    mask = np.zeros((n, len(SYNTHETIC_SCHEMA.columns)), dtype=bool)
    features = [j for j, (_, k) in enumerate(SYNTHETIC_SCHEMA.columns) if k is not ColumnKind.TARGET]
    mask[:, features] = rng.random((n, len(features))) < config.missing_rate
    return Dataset(SYNTHETIC_SCHEMA, columns, mask)


def hierarchy_of(dataset: Dataset) -> dict[str, list[str]]:
    """Observed top -> sorted bottom categories over rows where both are present."""
    tops, bottoms = dataset.column("top_category"), dataset.column("bottom_category")
    ok = ~(dataset.missing("top_category") | dataset.missing("bottom_category"))
    out: dict[str, set[str]] = {}
    for t, b in zip(tops[ok], bottoms[ok]):
        out.setdefault(t, set()).add(b)
    return {t: sorted(bs) for t, bs in sorted(out.items())}
