"""Confusion matrices and precision / recall / F1 reports."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from prodcat.errors import PipelineError

COMPARISON_COLUMNS = ("target", "model", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    label_vocab: tuple[str, ...]
    counts: np.ndarray  # (true, predicted)

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def count(self, true_label, pred_label) -> int:
        i, j = self.label_vocab.index(true_label), self.label_vocab.index(pred_label)
        return int(self.counts[i, j])


def confusion(y_true: Sequence, y_pred: Sequence, labels: Sequence[str] | None = None) -> ConfusionMatrix:
    """Count matrix over ``labels`` (default: sorted union of both sequences),
    extended by any label that appears only in the data."""
    y_true, y_pred = [str(v) for v in y_true], [str(v) for v in y_pred]
    if len(y_true) != len(y_pred):
        raise PipelineError(f"length mismatch: {len(y_true)} true labels vs {len(y_pred)} predictions")
    vocab = list(labels) if labels is not None else sorted(set(y_true) | set(y_pred))
    known = set(vocab)
    for lab in list(dict.fromkeys(y_true + y_pred)):
        if lab not in known:
            vocab.append(lab)
            known.add(lab)
    pos = {lab: i for i, lab in enumerate(vocab)}
    K = len(vocab)
    flat = np.array([pos[t] * K + pos[p] for t, p in zip(y_true, y_pred)], dtype=np.intp)
    counts = np.bincount(flat, minlength=K * K).reshape(K, K) if flat.size else np.zeros((K, K), dtype=np.intp)
    return ConfusionMatrix(tuple(vocab), counts.astype(np.int64))


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num, den = np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def f1_score(precision, recall):
    """Harmonic mean of precision and recall, 0 where both are 0."""
    p, r = np.asarray(precision, dtype=np.float64), np.asarray(recall, dtype=np.float64)
    out = _safe_div(2.0 * p * r, p + r)
    return float(out) if out.ndim == 0 else out


@dataclass
class MetricsReport:
    target: str
    model: str
    labels: tuple[str, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)
    accuracy: float = 0.0

    def per_class(self) -> list[dict]:
        return [
            {"label": lab, "precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
            for lab, p, r, f, s in zip(self.labels, self.precision, self.recall, self.f1, self.support)
        ]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "model": self.model,
            "accuracy": self.accuracy,
            "macro": self.macro,
            "weighted": self.weighted,
            "per_class": self.per_class(),
        }


def precision_recall_f1(cm: ConfusionMatrix, target: str = "", model: str = "") -> MetricsReport:
    """Per-class precision TP/(TP+FP), recall TP/(TP+FN) and their F1, with 0/0 taken as 0.

    Macro averages weight classes equally; weighted averages weight them by
    true-label support.
    """
    tp, fp, fn = cm.tp, cm.fp, cm.fn
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = f1_score(precision, recall)
    f1 = np.atleast_1d(f1)
    support = cm.counts.sum(axis=1)
    K = len(cm.label_vocab)
    total = support.sum()

    def avg(w):
        return {
            "precision": float(np.dot(w, precision)),
            "recall": float(np.dot(w, recall)),
            "f1": float(np.dot(w, f1)),
        }

    macro = avg(np.full(K, 1.0 / K)) if K else {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    weighted = avg(support / total) if total else {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    accuracy = float(tp.sum() / total) if total else 0.0
    return MetricsReport(target, model, cm.label_vocab, precision, recall, f1, support, macro, weighted, accuracy)


def evaluate(y_true, y_pred, target: str = "", model: str = "", labels=None) -> MetricsReport:
    return precision_recall_f1(confusion(y_true, y_pred, labels), target, model)


def cross_target_average(f1s: Sequence[float]) -> float:
    """Arithmetic mean of the per-target F1 scores, rounded to 2 decimals."""
    vals = [float(v) for v in f1s]
    if len(vals) != 3 or any(not 0.0 <= v <= 1.0 for v in vals):
        raise PipelineError(f"expected three F1 values in [0, 1], got {vals}")
    return round(sum(vals) / 3.0, 2)


def majority_baseline(y_true: Sequence, target: str = "") -> MetricsReport:
    """Report for a predictor that always outputs the most frequent true label."""
    y_true = [str(v) for v in y_true]
    labels, counts = np.unique(y_true, return_counts=True)
    top = str(labels[int(np.argmax(counts))])
    return evaluate(y_true, [top] * len(y_true), target, "majority")


def emit_comparison(reports: Sequence[MetricsReport], path: str | os.PathLike) -> None:
    """Write macro precision/recall/F1 per (target, model), grouped by target."""
    if not reports:
        raise PipelineError("no reports to write")
    order = list(dict.fromkeys(r.target for r in reports))
    rows = sorted(reports, key=lambda r: order.index(r.target))
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise PipelineError(f"cannot write {path}: {exc}") from None
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([r.target, r.model, f"{r.macro['precision']:.6f}", f"{r.macro['recall']:.6f}", f"{r.macro['f1']:.6f}"])


def read_comparison(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COMPARISON_COLUMNS:
            raise PipelineError(f"{path}: expected columns {COMPARISON_COLUMNS}, got {reader.fieldnames}")
        return [
            {"target": r["target"], "model": r["model"], **{k: float(r[k]) for k in ("precision", "recall", "f1")}}
            for r in reader
        ]


def format_table(reports: Sequence[MetricsReport]) -> str:
    lines = [f"{'target':<16} {'model':<8} {'precision':>9} {'recall':>9} {'f1':>9} {'w-f1':>9} {'acc':>9}"]
    for r in reports:
        lines.append(
            f"{r.target:<16} {r.model:<8} {r.macro['precision']:>9.4f} {r.macro['recall']:>9.4f} "
            f"{r.macro['f1']:>9.4f} {r.weighted['f1']:>9.4f} {r.accuracy:>9.4f}"
        )
    return "\n".join(lines)
