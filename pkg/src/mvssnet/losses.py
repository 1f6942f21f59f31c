"""Pixel-, edge- and image-scale losses and their convex combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import DimensionError, Tensor, as_tensor

DICE_EPS = 1e-9
BCE_CLAMP = 1e-7


class ConfigError(ValueError):
    """Invalid training or loss configuration."""


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.16
    beta: float = 0.04

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1 and self.alpha + self.beta < 1):
            raise ConfigError(f"need alpha, beta in (0, 1) with alpha + beta < 1, got {self.alpha}, {self.beta}")

    @property
    def edge(self) -> float:
        return 1.0 - self.alpha - self.beta


@dataclass
class Targets:
    pixel_mask: np.ndarray  # (n, 1, H, W) binary
    edge_mask: np.ndarray  # (n, 1, H/4, W/4) binary
    labels: np.ndarray  # (n,) binary

    def __post_init__(self):
        derived = self.pixel_mask.reshape(len(self.pixel_mask), -1).max(axis=1) > 0
        if not np.array_equal(derived, np.asarray(self.labels) > 0):
            raise ConfigError("image labels must equal max of each pixel mask")


def dice_loss(S: Tensor, Y, per_sample: bool = False) -> Tensor:
    """``1 - (2 sum(S*Y) + eps) / (sum S^2 + sum Y^2 + eps)`` per sample; batch mean by default.

    Smoothing both terms makes an empty prediction of an empty target score 0.
    """
    Y = as_tensor(Y)
    if S.shape != Y.shape:
        raise DimensionError(f"dice_loss: prediction {S.shape} vs target {Y.shape}")
    axes = tuple(range(1, S.ndim))
    inter = ops.add_const(ops.scale(ops.sum(S * Y, axes=axes), 2.0), DICE_EPS)
    denom = ops.add_const(ops.sum(S * S, axes=axes) + ops.sum(Y * Y, axes=axes), DICE_EPS)
    loss = 1.0 - inter / denom
    return loss if per_sample else ops.mean(loss)


def edge_loss(edge_pred: Tensor, edge_target, per_sample: bool = False) -> Tensor:
    edge_target = as_tensor(edge_target)
    if edge_pred.shape != edge_target.shape:
        raise DimensionError(
            f"edge_loss works at quarter resolution: prediction {edge_pred.shape} vs target "
            f"{edge_target.shape}; downsample the target first"
        )
    return dice_loss(edge_pred, edge_target, per_sample)


def bce_image_loss(C: Tensor, y, per_sample: bool = False) -> Tensor:
    y = np.asarray(y, dtype=float).reshape(C.shape)
    Cc = ops.clamp(C, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(Tensor(y) * ops.log(Cc) + Tensor(1.0 - y) * ops.log(1.0 - Cc))
    return loss if per_sample else ops.mean(loss)


@dataclass
class LossParts:
    total: Tensor
    seg: float  # mean over manipulated samples (nan if none)
    edg: float
    clf: float  # mean over all samples


def combined_loss(pred, targets: Targets, w: LossWeights) -> LossParts:
    """Per-sample convex combination; authentic samples contribute only the image-scale term."""
    if not isinstance(w, LossWeights):
        raise ConfigError("combined_loss needs LossWeights")
    labels = np.asarray(targets.labels).reshape(-1)
    n = len(labels)
    manip = np.flatnonzero(labels > 0)
    clf = bce_image_loss(pred.score, labels, per_sample=True)
    total = ops.scale(ops.sum(clf), w.beta)
    seg_v = edg_v = float("nan")
    if len(manip):
        seg = dice_loss(ops.take(pred.seg, manip, 0), targets.pixel_mask[manip], per_sample=True)
        edg = edge_loss(ops.take(pred.edge, manip, 0), targets.edge_mask[manip], per_sample=True)
        total = total + ops.scale(ops.sum(seg), w.alpha) + ops.scale(ops.sum(edg), w.edge)
        seg_v, edg_v = float(seg.data.mean()), float(edg.data.mean())
    total = ops.scale(total, 1.0 / n)
    return LossParts(total=total, seg=seg_v, edg=edg_v, clf=float(clf.data.mean()))
