"""Confusion-matrix metrics: overall accuracy, per-class IoU and F1.

Rows are the true class, columns the predicted class. Classes with no
ground-truth and no predicted pixels are unsupported: they are reported as
``None`` and left out of every mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, DataError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray          # (l, l) int64
    ignore_index: int = 0

    @classmethod
    def empty(cls, num_classes: int, ignore_index: int = 0) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), ignore_index)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def offset(self) -> int:
        return 1 if self.ignore_index == 0 else 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def class_ids(self) -> List[int]:
        return [i + self.offset for i in range(self.num_classes)]

    def at(self, true_id: int, pred_id: int) -> int:
        """Count indexed by class ids rather than matrix positions."""
        return int(self.counts[true_id - self.offset, pred_id - self.offset])

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.counts.shape != self.counts.shape or other.ignore_index != self.ignore_index:
            raise ArgumentError("cannot add confusion matrices of different layouts")
        return ConfusionMatrix(self.counts + other.counts, self.ignore_index)


def accumulate(cm: ConfusionMatrix, pred, gt) -> ConfusionMatrix:
    """Return a new matrix with the pixels of ``(pred, gt)`` added; ignored gt pixels are skipped."""
    pred = np.asarray(pred).ravel().astype(np.int64)
    gt = np.asarray(gt).ravel().astype(np.int64)
    if pred.shape != gt.shape:
        raise ArgumentError(f"pred has {pred.size} pixels, gt has {gt.size}")
    keep = gt != cm.ignore_index
    t = gt[keep] - cm.offset
    p = pred[keep] - cm.offset
    l = cm.num_classes
    if t.size and (t.min() < 0 or t.max() >= l):
        raise DataError(f"ground-truth class outside 1..{l}")
    if p.size and (p.min() < 0 or p.max() >= l):
        raise DataError(f"predicted class outside the {l}-class range")
    add = np.bincount(t * l + p, minlength=l * l).reshape(l, l)
    return ConfusionMatrix(cm.counts + add, cm.ignore_index)


def _require(cm: ConfusionMatrix):
    if cm.total == 0:
        raise UndefinedMetricError("confusion matrix is empty (no evaluated pixels)")


def overall_accuracy(cm: ConfusionMatrix) -> float:
    _require(cm)
    return float(np.trace(cm.counts) / cm.total)


def _mean(values: Sequence[Optional[float]]) -> float:
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else 0.0


def mean_iou(cm: ConfusionMatrix) -> Tuple[List[Optional[float]], float]:
    _require(cm)
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    rows, cols = c.sum(1), c.sum(0)
    per = []
    for i in range(cm.num_classes):
        if rows[i] + cols[i] == 0:
            per.append(None)
        else:
            per.append(float(tp[i] / (rows[i] + cols[i] - tp[i])))
    return per, _mean(per)


def mean_f1(cm: ConfusionMatrix, mode: str = "standard") -> Tuple[List[Optional[float]], float]:
    """Per-class F1 and its mean.

    ``paper_literal`` uses precision/recall denominators ``row_i + p_ii`` and
    ``col_i + p_ii``, sums P and R over classes, and returns
    ``2PR / (P + R) / l``; its per-class list uses the same denominators.
    """
    _require(cm)
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    rows, cols = c.sum(1), c.sum(0)
    l = cm.num_classes
    if mode == "standard":
        per = []
        for i in range(l):
            if rows[i] + cols[i] == 0:
                per.append(None)
            elif tp[i] == 0:
                per.append(0.0)
            else:
                prec, rec = tp[i] / cols[i], tp[i] / rows[i]
                per.append(float(2 * prec * rec / (prec + rec)))
        return per, _mean(per)
    if mode == "paper_literal":
        with np.errstate(divide="ignore", invalid="ignore"):
            p_i = np.where(rows + tp > 0, tp / (rows + tp), 0.0)
            r_i = np.where(cols + tp > 0, tp / (cols + tp), 0.0)
        per = []
        for i in range(l):
            if rows[i] + cols[i] == 0:
                per.append(None)
            elif p_i[i] + r_i[i] == 0:
                per.append(0.0)
            else:
                per.append(float(2 * p_i[i] * r_i[i] / (p_i[i] + r_i[i])))
        big_p, big_r = p_i.sum(), r_i.sum()
        mf1 = 0.0 if big_p + big_r == 0 else float(2 * big_p * big_r / (big_p + big_r) / l)
        return per, mf1
    raise ArgumentError(f"unknown F1 mode {mode!r}")


def build_report(cm: ConfusionMatrix, class_names: Optional[Sequence[str]] = None,
                 mode: str = "standard") -> dict:
    ious, miou = mean_iou(cm)
    f1s, mf1 = mean_f1(cm, mode)
    names = list(class_names) if class_names is not None else [str(i) for i in cm.class_ids()]
    per_class = [
        {"class_id": cid, "name": names[k], "iou": ious[k], "f1": f1s[k]}
        for k, cid in enumerate(cm.class_ids())
    ]
    return {
        "oa": overall_accuracy(cm),
        "miou": miou,
        "mf1": mf1,
        "per_class": per_class,
        "confusion": cm.counts.astype(int).tolist(),
        "mode": mode,
        "evaluated_pixels": cm.total,
    }


def write_report(report: dict, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def format_table(report: dict) -> str:
    lines = [f"{'class':<40} {'IoU':>8} {'F1':>8}"]
    for row in report["per_class"]:
        iou = "--" if row["iou"] is None else f"{100 * row['iou']:.2f}"
        f1 = "--" if row["f1"] is None else f"{100 * row['f1']:.2f}"
        lines.append(f"{row['class_id']:>2} {row['name']:<37} {iou:>8} {f1:>8}")
    lines.append(f"OA {100 * report['oa']:.2f}  mIoU {100 * report['miou']:.2f}  "
                 f"mF1 {100 * report['mf1']:.2f}  ({report['evaluated_pixels']} px, {report['mode']})")
    return "\n".join(lines)
