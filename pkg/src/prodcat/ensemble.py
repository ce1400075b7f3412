"""Shared preprocessing plus one independently trained model per target."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from prodcat.config import MODEL_KINDS, PipelineConfig
from prodcat.dataset import TARGETS, ColumnKind, Dataset, drop_missing_targets, hierarchy_of
from prodcat.encoding import MinHashEncoder, fit_minhash
from prodcat.errors import ModelFormatError, PipelineError, SchemaError
from prodcat.forest import ForestModel, fit_forest
from prodcat.gbt import GbtModel, fit_gbt
from prodcat.imputation import KnnImputer, MaskedMatrix, fit_imputer, impute
from prodcat.knn import KnnModel, fit_knn
from prodcat.metrics import MetricsReport, evaluate
from prodcat.resampling import histogram, plan_targets, rebalance

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_MODEL_CLASSES = {"knn": KnnModel, "forest": ForestModel, "gbt": GbtModel}


class PredictionRecord(NamedTuple):
    row_id: int
    top_category: str
    bottom_category: str
    color: str


@dataclass
class Preprocessor:
    """Min-Hash encodes string columns (one block of ``n_components`` columns
    each), passes numeric columns through, and imputes every masked cell."""

    feature_columns: list[tuple[str, ColumnKind]]
    encoder: MinHashEncoder
    imputer: KnnImputer | None = None

    @property
    def width(self) -> int:
        return sum(self.encoder.n_components if k.is_string else 1 for _, k in self.feature_columns)

    def check(self, dataset: Dataset) -> None:
        for name, kind in self.feature_columns:
            if name not in dataset.schema.names:
                raise SchemaError(f"data lacks feature column {name!r} used at training time")
            if dataset.schema.kind(name) is not kind:
                raise SchemaError(
                    f"column {name!r} has kind {dataset.schema.kind(name).value!r}, "
                    f"model was trained with {kind.value!r}"
                )

    def masked(self, dataset: Dataset) -> MaskedMatrix:
        self.check(dataset)
        blocks, masks = [], []
        for name, kind in self.feature_columns:
            missing = dataset.missing(name)
            if kind.is_string:
                enc = self.encoder.encode_column(dataset.column(name), missing)
                blocks.append(enc)
                masks.append(np.repeat(missing[:, None], enc.shape[1], axis=1))
            else:
                blocks.append(np.nan_to_num(dataset.column(name), nan=0.0)[:, None])
                masks.append(missing[:, None])
        n = dataset.row_count
        values = np.hstack(blocks) if blocks else np.zeros((n, 0))
        mask = np.hstack(masks) if masks else np.zeros((n, 0), dtype=bool)
        return MaskedMatrix(values, mask)

    def fit(self, dataset: Dataset, k: int) -> np.ndarray:
        """Fit the imputer on ``dataset`` and return its completed feature matrix."""
        mm = self.masked(dataset)
        self.imputer = fit_imputer(mm, k)
        return impute(self.imputer, mm, exclude_self=True)

    def transform(self, dataset: Dataset) -> np.ndarray:
        if self.imputer is None:
            raise PipelineError("preprocessor has not been fitted")
        return impute(self.imputer, self.masked(dataset))

    def to_dict(self) -> dict:
        return {
            "feature_columns": [[n, k.value] for n, k in self.feature_columns],
            "encoder": self.encoder.to_dict(),
        }


def fit_preprocessor(dataset: Dataset, config: PipelineConfig) -> tuple[Preprocessor, np.ndarray]:
    opts = config.pipeline
    features = dataset.schema.feature_columns
    if not features:
        raise SchemaError("dataset has no feature columns")
    encoder = fit_minhash(opts.minhash_seed, opts.minhash_components, opts.ngram_size)
    prep = Preprocessor(features, encoder)
    X = prep.fit(dataset, opts.imputer_k)
    return prep, X


def _target_rng(config: PipelineConfig, target: str) -> np.random.Generator:
    return np.random.default_rng([config.pipeline.seed, TARGETS.index(target)])


def training_rows(X: np.ndarray, y: np.ndarray, target: str, kind: str, config: PipelineConfig):
    """Subsample to the model's configured size, then rebalance the classes."""
    rng = _target_rng(config, target)
    size = config.sample_size(kind)
    if len(y) > size:
        rows = np.sort(rng.choice(len(y), size=size, replace=False))
        X, y = X[rows], y[rows]
    counts = histogram(y)
    seed = int(rng.integers(2**31))
    plan = plan_targets(counts, config.pipeline.rebalance_policy, config.pipeline.smote_k, seed)
    Xb, yb = rebalance(X, y, plan)
    log.info("%s/%s: %d rows, %d classes -> %d rows after rebalance", target, kind, len(y), len(counts), len(yb))
    return Xb, yb


def fit_model(kind: str, X: np.ndarray, y: np.ndarray, config: PipelineConfig, threads: int = 1):
    if kind == "knn":
        return fit_knn(X, y, config.knn)
    if kind == "forest":
        return fit_forest(X, y, config.forest, threads=threads)
    if kind == "gbt":
        return fit_gbt(X, y, config.gbt)
    raise PipelineError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _labels(dataset: Dataset, target: str) -> np.ndarray:
    y = np.asarray(dataset.column(target), dtype=object)
    if len(set(y.tolist())) < 2:
        raise PipelineError(f"target {target!r} has a single class; nothing to learn")
    return y


@dataclass
class EnsembleModel:
    config: PipelineConfig
    preprocessor: Preprocessor
    models: dict
    hierarchy: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def routing(self) -> dict[str, str]:
        return {t: m.kind for t, m in self.models.items()}

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "config": self.config.to_dict(),
            "encoder": self.preprocessor.encoder.to_dict(),
            "feature_columns": [[n, k.value] for n, k in self.preprocessor.feature_columns],
            "imputer": self.preprocessor.imputer.to_dict(),
            "hierarchy": self.hierarchy,
            "models": {t: m.to_dict() for t, m in self.models.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"model file format_version {version!r} is not supported (expected {FORMAT_VERSION})")
        try:
            config = PipelineConfig.from_dict(d["config"])
            prep = Preprocessor(
                [(n, ColumnKind(k)) for n, k in d["feature_columns"]],
                MinHashEncoder.from_dict(d["encoder"]),
                KnnImputer.from_dict(d["imputer"]),
            )
            models = {t: _MODEL_CLASSES[d["models"][t]["kind"]].from_dict(d["models"][t]) for t in TARGETS}
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"model file is malformed: {exc!r}") from None
        return cls(config, prep, models, d.get("hierarchy", {}), version)


def train_ensemble(dataset: Dataset, config: PipelineConfig | None = None, threads: int = 1) -> EnsembleModel:
    """Encode and impute once, then fit each target's configured model on its
    own subsampled, rebalanced copy of the feature matrix."""
    config = config or PipelineConfig()
    dataset.schema.require_targets()
    dataset = drop_missing_targets(dataset)
    if dataset.row_count == 0:
        raise PipelineError("no training rows with all three targets present")
    labels = {t: _labels(dataset, t) for t in TARGETS}
    prep, X = fit_preprocessor(dataset, config)
    models = {}
    for target in TARGETS:
        kind = config.model_for(target)
        Xt, yt = training_rows(X, labels[target], target, kind, config)
        models[target] = fit_model(kind, Xt, yt, config, threads)
    return EnsembleModel(config, prep, models, hierarchy_of(dataset))


def predict_matrix(model: EnsembleModel, X: np.ndarray, threads: int = 1) -> dict[str, np.ndarray]:
    return {t: np.asarray(m.predict(X, threads=threads), dtype=object) for t, m in model.models.items()}


def predict_products(model: EnsembleModel, dataset: Dataset, threads: int = 1) -> list[PredictionRecord]:
    if dataset.row_count == 0:
        model.preprocessor.check(dataset)
        return []
    X = model.preprocessor.transform(dataset)
    preds = predict_matrix(model, X, threads)
    return [
        PredictionRecord(i, str(preds["top_category"][i]), str(preds["bottom_category"][i]), str(preds["color"][i]))
        for i in range(dataset.row_count)
    ]


def evaluate_predictions(dataset: Dataset, records: Sequence[PredictionRecord], model: EnsembleModel) -> list[MetricsReport]:
    """Per-target reports of ``records`` against the dataset's true labels
    (rows with a missing target are skipped for that target)."""
    reports = []
    for target in TARGETS:
        keep = ~dataset.missing(target)
        y_true = dataset.column(target)[keep]
        y_pred = np.array([getattr(r, target) for r in records], dtype=object)[keep]
        reports.append(evaluate(y_true, y_pred, target, model.models[target].kind))
    return reports


def hierarchy_consistency(records: Sequence[PredictionRecord], hierarchy: dict[str, list[str]]) -> float:
    """Fraction of predictions whose bottom category belongs to the predicted top category."""
    if not records:
        return 1.0
    ok = sum(r.bottom_category in hierarchy.get(r.top_category, ()) for r in records)
    return ok / len(records)


def compare_models(
    dataset: Dataset,
    config: PipelineConfig | None = None,
    pairs: Sequence[tuple[str, str]] | None = None,
    eval_dataset: Dataset | None = None,
    threads: int = 1,
) -> list[MetricsReport]:
    """Train each (target, model kind) pair on shared preprocessing and report
    its scores on ``eval_dataset`` (default: the training rows).

    Evaluation rows always go through the fitted preprocessor exactly as
    :func:`predict_products` would send them, so scores agree with the
    ensemble's own."""
    config = config or PipelineConfig()
    dataset.schema.require_targets()
    dataset = drop_missing_targets(dataset)
    pairs = pairs or [(t, k) for t in TARGETS for k in MODEL_KINDS]
    prep, X = fit_preprocessor(dataset, config)
    eval_dataset = dataset if eval_dataset is None else drop_missing_targets(eval_dataset)
    X_eval = prep.transform(eval_dataset)
    reports = []
    for target, kind in pairs:
        Xt, yt = training_rows(X, _labels(dataset, target), target, kind, config)
        model = fit_model(kind, Xt, yt, config, threads)
        pred = model.predict(X_eval, threads=threads)
        reports.append(evaluate(eval_dataset.column(target), pred, target, kind))
    return reports


# ------------------------------------------------------------- persistence


def model_bytes(model: EnsembleModel) -> bytes:
    return json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(model: EnsembleModel, path: str | os.PathLike) -> None:
    data = model_bytes(model)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise PipelineError(f"cannot write model to {path}: {exc}") from None


def load_model(path: str | os.PathLike) -> EnsembleModel:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from None
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"model file {path} is corrupt: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"model file {path} is not a model document")
    return EnsembleModel.from_dict(doc)
