"""Confusion matrices, classification metrics, curve logs and text reports."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DataError

# Published reference figures (accuracy %, precision, recall, F1) from a
# private olive corpus. Display only; never used as a pass/fail threshold.
REFERENCE_RESULTS: Dict[str, tuple] = {
    "EfficientNetB0": (94.5, 0.94, 0.95, 0.94),
    "MobileNetV2": (92.8, 0.91, 0.93, 0.92),
}
REFERENCE_LABEL = "paper (private dataset — not comparable)"

CURVE_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


def confusion(predictions: Sequence[int], labels: Sequence[int], k: int) -> np.ndarray:
    """K x K counts, rows = true class, columns = predicted class."""
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    m = np.zeros((k, k), dtype=np.int64)
    for y, p in zip(labels, predictions):
        if not (0 <= y < k and 0 <= p < k):
            raise ValueError(f"class index out of range 0..{k - 1}: label {y}, prediction {p}")
        m[y, p] += 1
    return m


@dataclass
class MetricsReport:
    accuracy: float
    precision: List[float]
    recall: List[float]
    f1: List[float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    count: int
    class_names: List[str]
    matrix: np.ndarray


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def derive_metrics(matrix: np.ndarray, class_names: Optional[Sequence[str]] = None) -> MetricsReport:
    """Accuracy plus per-class and macro-averaged precision, recall and F1.

    Any 0/0 is taken as 0, so a class that is never true and never predicted
    scores 0 and still counts in the macro means.
    """
    m = np.asarray(matrix)
    total = int(m.sum())
    if total < 1:
        raise DataError("cannot derive metrics from an empty confusion matrix")
    k = m.shape[0]
    names = list(class_names) if class_names is not None else [str(i) for i in range(k)]
    diag = np.diag(m)
    cols, rows = m.sum(axis=0), m.sum(axis=1)
    precision = [_ratio(int(diag[i]), int(cols[i])) for i in range(k)]
    recall = [_ratio(int(diag[i]), int(rows[i])) for i in range(k)]
    f1 = [_ratio(2 * p * r, p + r) for p, r in zip(precision, recall)]
    return MetricsReport(
        accuracy=int(diag.sum()) / total,
        precision=precision, recall=recall, f1=f1,
        macro_precision=sum(precision) / k, macro_recall=sum(recall) / k, macro_f1=sum(f1) / k,
        count=total, class_names=names, matrix=m.copy(),
    )


def log_curves(history) -> bytes:
    """Per-epoch CSV with six decimals; accepts EpochRecord-like objects."""
    if not history:
        raise ValueError("history is empty")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in history:
        w.writerow([r.epoch] + [f"{getattr(r, key):.6f}" for key in CURVE_HEADER[1:]])
    return buf.getvalue().encode("utf-8")


def read_curves(data: bytes) -> List[Dict[str, float]]:
    rows = list(csv.DictReader(io.StringIO(data.decode("utf-8"))))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in rows]


def render_report(metrics: MetricsReport, reference: Optional[Dict[str, tuple]] = None,
                  title: str = "") -> str:
    names = metrics.class_names
    width = max(12, max(len(n) for n in names) + 2)
    lines = []
    if title:
        lines.append(title)
    lines.append("Headline precision/recall/F1 are macro averages (unweighted mean over classes).")
    lines.append(f"samples: {metrics.count}")
    lines.append(f"accuracy: {metrics.accuracy * 100:.2f}%")
    lines.append("")
    lines.append(f"{'class':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}")
    for i, name in enumerate(names):
        lines.append(f"{name:<{width}}{metrics.precision[i]:>10.4f}{metrics.recall[i]:>10.4f}{metrics.f1[i]:>10.4f}")
    lines.append(f"{'macro':<{width}}{metrics.macro_precision:>10.4f}{metrics.macro_recall:>10.4f}{metrics.macro_f1:>10.4f}")
    lines.append("")
    lines.append("confusion matrix (rows = true, columns = predicted)")
    cell = max(6, max(len(n) for n in names) + 1)
    lines.append(" " * width + "".join(f"{n[:cell - 1]:>{cell}}" for n in names))
    for i, name in enumerate(names):
        lines.append(f"{name:<{width}}" + "".join(f"{int(v):>{cell}}" for v in metrics.matrix[i]))
    if reference:
        labels = [f"{REFERENCE_LABEL} {name}" for name in reference]
        lw = max(len(x) for x in labels + ["this run"]) + 2
        lines.append("")
        lines.append(f"{'model':<{lw}}{'accuracy%':>10}{'precision':>10}{'recall':>10}{'f1':>10}")
        lines.append(
            f"{'this run':<{lw}}{metrics.accuracy * 100:>10.1f}{metrics.macro_precision:>10.2f}"
            f"{metrics.macro_recall:>10.2f}{metrics.macro_f1:>10.2f}"
        )
        for label, (acc, p, r, f) in zip(labels, reference.values()):
            lines.append(f"{label:<{lw}}{acc:>10.1f}{p:>10.2f}{r:>10.2f}{f:>10.2f}")
        lines.append("Reference rows come from a private corpus and do not say whether their")
        lines.append("precision/recall are macro or weighted averages.")
    return "\n".join(lines) + "\n"


def metrics_key_values(metrics: MetricsReport) -> str:
    """Flat ``key = value`` rendering, same syntax as the config file."""
    out = [f"samples = {metrics.count}", f"accuracy = {metrics.accuracy:.6f}",
           f"macro_precision = {metrics.macro_precision:.6f}",
           f"macro_recall = {metrics.macro_recall:.6f}", f"macro_f1 = {metrics.macro_f1:.6f}"]
    for i, name in enumerate(metrics.class_names):
        out += [f"class.{name}.precision = {metrics.precision[i]:.6f}",
                f"class.{name}.recall = {metrics.recall[i]:.6f}",
                f"class.{name}.f1 = {metrics.f1[i]:.6f}"]
    for i, name in enumerate(metrics.class_names):
        out.append(f"confusion.{name} = " + ",".join(str(int(v)) for v in metrics.matrix[i]))
    return "\n".join(out) + "\n"
