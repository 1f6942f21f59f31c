"""Pixel- and image-level evaluation metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .autodiff import UsageError


@dataclass
class MetricReport:
    pixel_f1: float
    pixel_precision: float
    pixel_recall: float
    image_auc: float
    image_accuracy: float
    specificity: float
    sensitivity: float
    n_manipulated: int
    n_authentic: int
    tp: int
    fp: int
    tn: int
    fn: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(
            f"{k:16s} {v:.6f}\n" if isinstance(v, float) else f"{k:16s} {v}\n" for k, v in asdict(self).items()
        )


def prf(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """Precision, recall, F1 of binary arrays; F1 = 0 when P + R = 0."""
    pred = np.asarray(pred) > 0
    truth = np.asarray(truth) > 0
    tp = np.sum(pred & truth)
    p = tp / pred.sum() if pred.sum() else 0.0
    r = tp / truth.sum() if truth.sum() else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return float(p), float(r), float(f1)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties; nan when a class is missing."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1) > 0
    if len(scores) == 0:
        raise UsageError("auc of empty input")
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)  # average ranks
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def metrics(seg_probs, masks, scores, labels, threshold: float = 0.5) -> MetricReport:
    """``seg_probs``/``masks`` are per-image maps; F1 is averaged over manipulated images."""
    labels = np.asarray(labels).reshape(-1).astype(int)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if len(labels) == 0:
        raise UsageError("metrics of empty input")
    if not (len(seg_probs) == len(masks) == len(scores) == len(labels)):
        raise UsageError("prediction and truth lists are not aligned")
    per = [prf(np.asarray(s) >= threshold, m) for s, m, y in zip(seg_probs, masks, labels) if y == 1]
    p, r, f = (float(np.mean(v)) for v in zip(*per)) if per else (float("nan"),) * 3
    pred_pos = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred_pos & pos))
    fp = int(np.sum(pred_pos & ~pos))
    tn = int(np.sum(~pred_pos & ~pos))
    fn = int(np.sum(~pred_pos & pos))
    return MetricReport(
        pixel_f1=f,
        pixel_precision=p,
        pixel_recall=r,
        image_auc=auc(scores, labels),
        image_accuracy=(tp + tn) / len(labels),
        specificity=tn / (tn + fp) if tn + fp else float("nan"),
        sensitivity=tp / (tp + fn) if tp + fn else float("nan"),
        n_manipulated=int(pos.sum()),
        n_authentic=int((~pos).sum()),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )
