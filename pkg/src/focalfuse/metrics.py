"""Confusion matrix, Top-k accuracy and prevalence-weighted P/R/F1.

Ties are broken towards the lowest class index everywhere (argmax and the
Top-k ranking), so results do not depend on the platform's sort. Undefined
ratios (zero denominators) count as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DataError, ShapeError
from .fusion import PredictionTable


def predicted_labels(probs: np.ndarray) -> np.ndarray:
    return np.argmax(np.atleast_2d(probs), axis=1)


def confusion(preds: PredictionTable) -> np.ndarray:
    """K x K counts, rows are true classes and columns predicted classes."""
    if len(preds) == 0:
        raise DataError("cannot tally an empty prediction table")
    K = preds.n_classes
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (preds.labels, predicted_labels(preds.probs)), 1)
    return cm


def topk_accuracy(preds: PredictionTable, k: int) -> float:
    """Percentage of rows whose label is among the ``min(k, K)`` top classes."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(preds) == 0:
        raise DataError("cannot score an empty prediction table")
    k = min(k, preds.n_classes)
    # stable sort on -p keeps the lower class index first among ties
    ranking = np.argsort(-preds.probs, axis=1, kind="stable")[:, :k]
    hits = int(np.count_nonzero((ranking == preds.labels[:, None]).any(axis=1)))
    return 100.0 * hits / len(preds)


@dataclass
class PerClass:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    support: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.support)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def per_class_prf(cm) -> PerClass:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ShapeError("confusion matrix has negative counts")
    tp = np.diag(cm).copy()
    support = cm.sum(axis=1)
    fp = cm.sum(axis=0) - tp
    fn = support - tp
    K = len(tp)
    precision = np.array([_ratio(int(tp[c]), int(tp[c] + fp[c])) for c in range(K)])
    recall = np.array([_ratio(int(tp[c]), int(support[c])) for c in range(K)])
    # 2PR/(P+R) written over counts, so it is one correctly rounded division
    f1 = np.array([_ratio(2 * int(tp[c]), int(2 * tp[c] + fp[c] + fn[c])) for c in range(K)])
    return PerClass(tp, fp, fn, support, precision, recall, f1)


def _exact(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def weighted_aggregate(pc: PerClass) -> tuple[float, float, float]:
    """Support-weighted means of precision, recall and F1.

    Sums are carried out in exact rational arithmetic from the integer counts
    and rounded once at the end.
    """
    N = int(pc.support.sum())
    if N <= 0:
        raise DataError("weighted average needs at least one supported class")
    P = R = F = Fraction(0)
    for c in range(pc.n_classes):
        s = int(pc.support[c])
        if s == 0:
            continue
        tp, fp, fn = int(pc.tp[c]), int(pc.fp[c]), int(pc.fn[c])
        P += s * _exact(tp, tp + fp)
        R += s * _exact(tp, s)
        F += s * _exact(2 * tp, 2 * tp + fp + fn)
    return float(P / N), float(R / N), float(F / N)


@dataclass
class EvalReport:
    name: str
    n_samples: int
    n_classes: int
    top1: float
    top5: float
    top5_k: int
    per_class: PerClass
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: np.ndarray
    fingerprint: str = ""
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        pc = self.per_class
        return {
            "name": self.name,
            "config_fingerprint": self.fingerprint,
            "n_samples": self.n_samples,
            "n_classes": self.n_classes,
            "top1": self.top1,
            "top5": self.top5,
            "top5_effective_k": self.top5_k,
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
            "per_class": [
                {
                    "class": c,
                    "support": int(pc.support[c]),
                    "precision": float(pc.precision[c]),
                    "recall": float(pc.recall[c]),
                    "f1": float(pc.f1[c]),
                }
                for c in range(pc.n_classes)
            ],
            "confusion": self.confusion.tolist(),
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        pc = self.per_class
        lines = [
            f"report: {self.name}",
            f"fingerprint: {self.fingerprint}",
            f"samples: {self.n_samples}  classes: {self.n_classes}",
            f"Top-1 {self.top1:7.2f}   Top-{self.top5_k} {self.top5:7.2f}",
            f"weighted  P {100 * self.weighted_precision:6.2f}  "
            f"R {100 * self.weighted_recall:6.2f}  F1 {100 * self.weighted_f1:6.2f}",
            "",
            f"{'class':>5} {'support':>7} {'precision':>9} {'recall':>7} {'f1':>7}",
        ]
        for c in range(pc.n_classes):
            lines.append(
                f"{c:>5} {int(pc.support[c]):>7} {pc.precision[c]:>9.4f} "
                f"{pc.recall[c]:>7.4f} {pc.f1[c]:>7.4f}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        cm = np.array(d["confusion"], dtype=np.int64)
        return cls(
            name=d["name"],
            n_samples=d["n_samples"],
            n_classes=d["n_classes"],
            top1=d["top1"],
            top5=d["top5"],
            top5_k=d["top5_effective_k"],
            per_class=per_class_prf(cm),
            weighted_precision=d["weighted"]["precision"],
            weighted_recall=d["weighted"]["recall"],
            weighted_f1=d["weighted"]["f1"],
            confusion=cm,
            fingerprint=d.get("config_fingerprint", ""),
            notes=d.get("notes", {}),
        )


def evaluate(preds: PredictionTable, name: str = "", fingerprint: str = "", notes=None) -> EvalReport:
    cm = confusion(preds)
    pc = per_class_prf(cm)
    wp, wr, wf = weighted_aggregate(pc)
    return EvalReport(
        name=name,
        n_samples=len(preds),
        n_classes=preds.n_classes,
        top1=topk_accuracy(preds, 1),
        top5=topk_accuracy(preds, 5),
        top5_k=min(5, preds.n_classes),
        per_class=pc,
        weighted_precision=wp,
        weighted_recall=wr,
        weighted_f1=wf,
        confusion=cm,
        fingerprint=fingerprint,
        notes=dict(notes or {}),
    )


@dataclass
class ClassDelta:
    cls: int
    support: int
    f1_a: float
    f1_b: float
    delta: float
    recovered: bool


def classwise_f1_delta(a: EvalReport, b: EvalReport) -> list[ClassDelta]:
    """Per-class ``F1_b - F1_a`` ordered head to tail by support in ``a``.

    ``recovered`` marks classes that ``a`` never got right (F1 of 0) but
    ``b`` does.
    """
    if a.n_classes != b.n_classes:
        raise ShapeError(f"reports cover {a.n_classes} and {b.n_classes} classes")
    out = []
    for c in range(a.n_classes):
        fa, fb = float(a.per_class.f1[c]), float(b.per_class.f1[c])
        out.append(ClassDelta(c, int(a.per_class.support[c]), fa, fb, fb - fa, fa == 0.0 and fb > 0.0))
    out.sort(key=lambda r: (-r.support, r.cls))
    return out
