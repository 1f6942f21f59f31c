"""Momentum SGD with constraint projection and the epoch loop."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor
from .layers import bayar_project, lambda_at
from .losses import ConfigError, LossWeights, Targets, combined_loss
from .network import MvssModel, predict
from .synthdata import Sample

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    epochs: int = 60
    batch_size: int = 8
    lr: float = 0.05
    momentum: float = 0.9
    lambda0: float = 0.99
    gamma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 2:
            raise ConfigError("epochs must be >= 2 so the lambda schedule spans [lambda0, 0]")
        if self.batch_size < 2 or self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError(f"invalid optimiser settings in {self}")


@dataclass
class EpochRow:
    epoch: int
    lam: float
    loss_seg: float
    loss_edg: float
    loss_clf: float
    total: float


@dataclass
class TrainReport:
    rows: list[EpochRow] = field(default_factory=list)

    COLUMNS = ("epoch", "lambda", "loss_seg", "loss_edg", "loss_clf", "total")

    def to_table(self) -> str:
        out = io.StringIO()
        out.write("{:>5} {:>9} {:>10} {:>10} {:>10} {:>10}\n".format(*self.COLUMNS))
        for r in self.rows:
            out.write(
                f"{r.epoch:5d} {r.lam:9.6f} {r.loss_seg:10.6f} {r.loss_edg:10.6f} {r.loss_clf:10.6f} {r.total:10.6f}\n"
            )
        return out.getvalue()

    def to_csv(self, sep: str = ",") -> str:
        lines = [sep.join(self.COLUMNS)]
        for r in self.rows:
            lines.append(sep.join(repr(float(v)) if i else str(v) for i, v in enumerate(
                (r.epoch, r.lam, r.loss_seg, r.loss_edg, r.loss_clf, r.total))))
        return "\n".join(lines) + "\n"


def sgd_step(model: MvssModel, cfg: TrainConfig) -> None:
    """``v = mu*v + g; w -= lr*v`` on every parameter with a gradient, then
    re-impose the BayarConv constraints and the GeM exponent floor."""
    named = list(model.named_parameters())
    for name, p in named:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise TrainingAborted(f"non-finite gradient in parameter {name!r}")
    for _, p in named:
        if p.grad is None:
            continue
        if p.momentum_buffer is None:
            p.momentum_buffer = np.zeros_like(p.data)
        p.momentum_buffer *= cfg.momentum
        p.momentum_buffer += p.grad
        p.data -= cfg.lr * p.momentum_buffer
    bayar_project(model.nsb.bayar)
    for head in model.gem_heads():
        head.clamp()


def stack_batch(samples: Sequence[Sample]) -> tuple[Tensor, Targets]:
    x = Tensor(np.concatenate([s.image for s in samples]))
    targets = Targets(
        pixel_mask=np.concatenate([s.pixel_mask for s in samples]),
        edge_mask=np.concatenate([s.edge_mask for s in samples]),
        labels=np.array([s.label for s in samples]),
    )
    return x, targets


def _batches(manip: np.ndarray, auth: np.ndarray, half: int, rng: np.random.Generator, auth_pos: list):
    """Manipulated samples in shuffled order, each chunk paired 1:1 with a cycled authentic stream."""
    order = rng.permutation(manip)
    for start in range(0, len(order), half):
        chunk = list(order[start : start + half])
        if len(auth):
            picked = []
            for _ in range(len(chunk)):
                if auth_pos[0] == 0:
                    auth_pos[1] = rng.permutation(auth)
                picked.append(auth_pos[1][auth_pos[0]])
                auth_pos[0] = (auth_pos[0] + 1) % len(auth)
            chunk += picked
        yield chunk


def train(
    model: MvssModel,
    dataset: Sequence[Sample],
    cfg: TrainConfig,
    on_step: Callable[[MvssModel, int], None] | None = None,
    stop_after: int | None = None,
) -> TrainReport:
    labels = np.array([s.label for s in dataset])
    manip = np.flatnonzero(labels == 1)
    auth = np.flatnonzero(labels == 0)
    if len(manip) == 0:
        raise ConfigError("dataset has no manipulated samples; seg/edge losses undefined")
    sched = model.schedule
    sched.lambda0, sched.gamma, sched.total_epochs = cfg.lambda0, cfg.gamma, cfg.epochs - 1

    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    auth_pos: list = [0, None]
    step = 0
    model.train()
    for epoch in range(cfg.epochs if stop_after is None else min(stop_after, cfg.epochs)):
        sums = np.zeros(4)
        counts = np.zeros(4)
        for idx in _batches(manip, auth, max(1, cfg.batch_size // 2), rng, auth_pos):
            x, targets = stack_batch([dataset[i] for i in idx])
            pred = predict(x, model, epoch)
            parts = combined_loss(pred, targets, cfg.weights)
            model.zero_grad()
            parts.total.backward()
            sgd_step(model, cfg)
            step += 1
            if on_step is not None:
                on_step(model, step)
            n_m = int(targets.labels.sum())
            n = len(idx)
            sums += [parts.seg * n_m if n_m else 0.0, parts.edg * n_m if n_m else 0.0, parts.clf * n,
                     parts.total.item()]
            counts += [n_m, n_m, n, 1]
        means = sums / np.maximum(counts, 1)
        row = EpochRow(epoch, lambda_at(sched, epoch), *means)
        report.rows.append(row)
        log.info("epoch %d lambda %.4f seg %.4f edg %.4f clf %.4f total %.4f", epoch, row.lam,
                 row.loss_seg, row.loss_edg, row.loss_clf, row.total)
    model.eval()
    return report
