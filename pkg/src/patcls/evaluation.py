"""Top-1 accuracy metrics, confusion matrices, and granularity roll-ups.

Macro accuracy is the mean of per-class recall over classes that actually
have test samples (classes with none are excluded and flagged); micro is
total correct over total. Perspective predictions made at C7 roll up to C4
and C2 by coarsening both truths and predictions through the taxonomy, so
one prediction pass yields all three reports.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .taxonomy import LEVELS, PERSPECTIVE_LEAF_NAMES, coarsen

GRANULARITY_ORDER = ("C7", "C4", "C2")


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    class_names: tuple[str, ...]
    counts: np.ndarray  # (C, C) int64


@dataclass
class EvalReport:
    task: str
    granularity: str | None
    class_names: tuple[str, ...]
    n_test: int
    confusion: ConfusionMatrix
    confusion_percent: np.ndarray
    per_class_accuracy: list[float | None]
    macro_top1: float
    micro_top1: float
    excluded_classes: tuple[str, ...]


def confusion_matrix(
    y_true: np.ndarray, y_pred: np.ndarray, class_names: tuple[str, ...]
) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError(
            f"label/prediction shape mismatch: {y_true.shape} vs {y_pred.shape}"
        )
    c = len(class_names)
    for arr, what in ((y_true, "true"), (y_pred, "predicted")):
        if arr.size and (arr.min() < 0 or arr.max() >= c):
            raise ValidationError(f"{what} class index out of range 0..{c - 1}")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(class_names=tuple(class_names), counts=counts)


def row_normalize(cm: ConfusionMatrix) -> np.ndarray:
    """Percentage matrix: each non-empty row sums to 100, empty rows stay 0."""
    counts = cm.counts.astype(np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    return np.divide(
        100.0 * counts,
        row_sums,
        out=np.zeros_like(counts),
        where=row_sums > 0,
    )


def macro_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-class recall over classes with at least one test sample.

    The mean is accumulated sequentially so the result is bit-identical to
    a per-class loop over the raw pairs.
    """
    row_sums = cm.counts.sum(axis=1)
    recalls = [
        int(cm.counts[i, i]) / int(row_sums[i])
        for i in range(len(cm.class_names))
        if row_sums[i] > 0
    ]
    if not recalls:
        raise ValidationError("no test samples")
    return sum(recalls) / len(recalls)


def micro_accuracy(cm: ConfusionMatrix) -> float:
    """Total correct over total samples (trace over sum)."""
    total = int(cm.counts.sum())
    if total == 0:
        raise ValidationError("no test samples")
    return float(np.trace(cm.counts) / total)


def build_report(
    task: str,
    granularity: str | None,
    y_true: np.ndarray,
    y_pred: np.ndarray,
    class_names: tuple[str, ...],
) -> EvalReport:
    """Assemble the full metric block for one label space."""
    cm = confusion_matrix(y_true, y_pred, class_names)
    row_sums = cm.counts.sum(axis=1)
    per_class: list[float | None] = [
        float(cm.counts[i, i] / row_sums[i]) if row_sums[i] > 0 else None
        for i in range(len(class_names))
    ]
    excluded = tuple(
        name for name, s in zip(class_names, row_sums) if s == 0
    )
    return EvalReport(
        task=task,
        granularity=granularity,
        class_names=tuple(class_names),
        n_test=int(row_sums.sum()),
        confusion=cm,
        confusion_percent=row_normalize(cm),
        per_class_accuracy=per_class,
        macro_top1=macro_accuracy(cm),
        micro_top1=micro_accuracy(cm),
        excluded_classes=excluded,
    )


def coarsen_indices(y_c7: np.ndarray, level_tag: str) -> np.ndarray:
    """Map C7 class indices to class indices of a coarser level."""
    level = LEVELS[level_tag]
    lookup = np.array(
        [level.class_names.index(coarsen(leaf, level)) for leaf in PERSPECTIVE_LEAF_NAMES],
        dtype=np.int64,
    )
    y_c7 = np.asarray(y_c7, dtype=np.int64)
    if y_c7.size and (y_c7.min() < 0 or y_c7.max() >= len(PERSPECTIVE_LEAF_NAMES)):
        raise ValidationError("C7 class index out of range")
    return lookup[y_c7]


def hierarchical_report(
    y_true_c7: np.ndarray, y_pred_c7: np.ndarray
) -> dict[str, EvalReport]:
    """Reports at C7, C4, and C2 from one set of C7 truths and predictions."""
    reports: dict[str, EvalReport] = {}
    for tag in GRANULARITY_ORDER:
        yt = coarsen_indices(y_true_c7, tag)
        yp = coarsen_indices(y_pred_c7, tag)
        reports[tag] = build_report(
            "perspective", tag, yt, yp, LEVELS[tag].class_names
        )
    return reports


def report_to_dict(report: EvalReport) -> dict:
    """Stable-keyed JSON-ready form of a report."""
    return {
        "task": report.task,
        "granularity": report.granularity,
        "class_names": list(report.class_names),
        "n_test": report.n_test,
        "confusion_counts": report.confusion.counts.tolist(),
        "confusion_percent": report.confusion_percent.tolist(),
        "per_class_accuracy": report.per_class_accuracy,
        "macro_top1": report.macro_top1,
        "micro_top1": report.micro_top1,
        "excluded_classes": list(report.excluded_classes),
    }


def emit_report(report: EvalReport, path: str, format: str = "json") -> None:
    """Write a report to disk.

    ``json`` writes the full report to ``path``. ``csv`` treats ``path`` as
    a base name and writes ``<path>_confusion.csv`` (header = class names,
    row-normalized percentages) plus ``<path>_metrics.csv``. Numbers keep
    at least 8 significant digits; rounding is left to consumers.
    """
    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=2)
            fh.write("\n")
    elif format == "csv":
        with open(f"{path}_confusion.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(report.class_names)
            for row in report.confusion_percent:
                writer.writerow([f"{x:.8g}" for x in row])
        with open(f"{path}_metrics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("metric", "value"))
            writer.writerow(("macro_top1", f"{report.macro_top1:.8g}"))
            writer.writerow(("micro_top1", f"{report.micro_top1:.8g}"))
            writer.writerow(("n_test", report.n_test))
            for name, acc in zip(report.class_names, report.per_class_accuracy):
                value = f"{acc:.8g}" if acc is not None else ""
                writer.writerow((f"accuracy_{name}", value))
    else:
        raise ValidationError(f"unknown report format {format!r}")
