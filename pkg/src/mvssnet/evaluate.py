"""Batched inference over a sample list."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor, no_grad
from .metrics import MetricReport, metrics
from .network import MvssModel, predict
from .synthdata import Sample


def run_inference(model: MvssModel, samples: Sequence[Sample], batch_size: int = 16):
    """Returns (seg maps (N, H, W), edge maps (N, H/4, W/4), scores (N,)) in eval mode."""
    model.eval()
    segs, edges, scores = [], [], []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            pred = predict(Tensor(np.concatenate([s.image for s in chunk])), model)
            segs.append(pred.seg.data[:, 0])
            edges.append(pred.edge.data[:, 0])
            scores.append(pred.score.data.reshape(-1))
    return np.concatenate(segs), np.concatenate(edges), np.concatenate(scores)


def evaluate(model: MvssModel, samples: Sequence[Sample], threshold: float = 0.5) -> MetricReport:
    segs, _, scores = run_inference(model, samples)
    return metrics(segs, [s.pixel_mask[0, 0] for s in samples], scores, [s.label for s in samples], threshold)
