"""Confusion matrices and per-class precision/recall/F1/accuracy tables.

The per-class "accuracy" column is one-vs-rest accuracy: (TP + TN) / total.
Zero-denominator metrics are defined as 0 so tables always render. Ratios
are computed in exact rational arithmetic and rounded once at the end, so
results are bit-reproducible and match any exact recount.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import features as feat
from .errors import InvalidConfigError, ShapeError


def confusion(true_labels, predicted_labels, n_classes=None):
    """Count matrix with rows = true class, columns = predicted class."""
    true_idx = _as_indices(true_labels)
    pred_idx = _as_indices(predicted_labels)
    if len(true_idx) != len(pred_idx):
        raise ShapeError(
            f"label sequences differ in length: {len(true_idx)} vs {len(pred_idx)}"
        )
    if n_classes is None:
        n_classes = len(feat.CLASSES)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true_idx, pred_idx):
        cm[t, p] += 1
    return cm


def _as_indices(labels):
    return [feat.label_index(l) if isinstance(l, str) else int(l) for l in labels]


def organ_submatrix(cm, organ):
    """Organ-restricted view (5x5 heart or 6x6 lung) in canonical sub-order."""
    idx = feat.organ_indices(organ)
    return cm[np.ix_(idx, idx)]


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    accuracy: float


@dataclass
class MetricsReport:
    per_class: list
    overall_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    class_names: tuple


def _ratio(num, den):
    return Fraction(num, den) if den else Fraction(0)


def metrics_from_confusion(cm, class_names=None):
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise InvalidConfigError("confusion matrix is empty")
    if class_names is None:
        class_names = feat.CLASSES[: cm.shape[0]]
    if len(class_names) != cm.shape[0] or cm.shape[0] != cm.shape[1]:
        raise ShapeError(
            f"confusion matrix {cm.shape} inconsistent with {len(class_names)} classes"
        )
    rows = []
    for c, name in enumerate(class_names):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum()) - tp
        fn = int(cm[c, :].sum()) - tp
        tn = total - tp - fp - fn
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else Fraction(0))
        accuracy = _ratio(tp + tn, total)
        rows.append(ClassMetrics(name, float(precision), float(recall),
                                 float(f1), float(accuracy)))
    k = len(rows)
    return MetricsReport(
        per_class=rows,
        overall_accuracy=float(_ratio(int(np.trace(cm)), total)),
        macro_precision=sum(r.precision for r in rows) / k,
        macro_recall=sum(r.recall for r in rows) / k,
        macro_f1=sum(r.f1 for r in rows) / k,
        class_names=tuple(class_names),
    )


_COLUMNS = ("Precision", "Recall", "F1-Score", "Accuracy")


def render_table(report, fmt="text", percent=False):
    """Aligned text or CSV; values as 2-decimal ratios, or 2-decimal percents
    when percent=True (the heart-table style)."""
    if fmt not in ("text", "csv"):
        raise InvalidConfigError(f"format must be 'text' or 'csv', got {fmt!r}")

    def cell(v):
        return f"{v * 100:.2f}" if percent else f"{v:.2f}"

    header = ["Class", *(_COLUMNS)]
    rows = [
        [m.label, cell(m.precision), cell(m.recall), cell(m.f1), cell(m.accuracy)]
        for m in report.per_class
    ]
    if fmt == "csv":
        return "\n".join(",".join(r) for r in [header, *rows]) + "\n"
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
             for r in [header, *rows]]
    lines.append(f"Overall accuracy: {cell(report.overall_accuracy)}"
                 + ("%" if percent else ""))
    return "\n".join(lines) + "\n"


def save_confusion_csv(cm, path, class_names=None):
    """Confusion matrix as CSV with a label header row/column."""
    cm = np.asarray(cm)
    if class_names is None:
        class_names = feat.CLASSES[: cm.shape[0]]
    lines = ["true\\pred," + ",".join(class_names)]
    for name, row in zip(class_names, cm):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
