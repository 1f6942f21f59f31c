"""Two-branch manipulation detector: edge-supervised RGB branch, noise-sensitive
BayarConv branch, dual-attention fusion and pixel / edge / image heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autodiff import DimensionError, Tensor
from .layers import (
    BayarConvLayer,
    ConvGemHead,
    DualAttention,
    EdgeResidualBlock,
    GemHead,
    GmpHead,
    LambdaSchedule,
    SobelLayer,
)
from .module import BatchNorm2d, Conv2d, Module

HEADS = ("gmp", "gem", "convgem")


@dataclass
class ModelConfig:
    widths: tuple[int, int, int] = (16, 32, 64)
    k: int = 64
    edge_width: int = 16
    bayar_channels: int = 3
    head: str = "convgem"
    gem_p: float = 3.0
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    seed: int = 0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        self.widths = tuple(self.widths)


@dataclass
class Prediction:
    seg: Tensor  # (n, 1, H, W)
    edge: Tensor  # (n, 1, H/4, W/4)
    score: Tensor  # (n, 1, 1, 1)
    s_prime: Tensor | None = None  # (n, 1, H/16, W/16), pre-sigmoid


class ConvBNReLU(Module):
    def __init__(self, rng, c_in: int, c_out: int, stride: int = 1):
        self.conv = Conv2d(rng, c_in, c_out, 3, stride=stride, bias=False)
        self.bn = BatchNorm2d(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.bn(self.conv(x)))


class Stage(Module):
    def __init__(self, rng, c_in: int, c_out: int, strides: tuple[int, int]):
        self.block1 = ConvBNReLU(rng, c_in, c_out, strides[0])
        self.block2 = ConvBNReLU(rng, c_out, c_out, strides[1])

    def forward(self, x: Tensor) -> Tensor:
        return self.block2(self.block1(x))


class MiniBackbone(Module):
    """Four stages at output strides 4, 8, 16, 16."""

    STRIDES = (4, 8, 16, 16)

    def __init__(self, rng, c_in: int, widths: tuple[int, int, int], k: int):
        w1, w2, w3 = widths
        self.stages = [
            Stage(rng, c_in, w1, (2, 2)),
            Stage(rng, w1, w2, (2, 1)),
            Stage(rng, w2, w3, (2, 1)),
            Stage(rng, w3, k, (1, 1)),
        ]
        self.channels = (w1, w2, w3, k)

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def _check_divisible(x: Tensor) -> tuple[int, int]:
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionError(f"expected an (n, 3, H, W) image batch, got {x.shape}")
    H, W = x.shape[2:]
    if H % 16 or W % 16 or H == 0 or W == 0:
        raise DimensionError(
            f"image size {H}x{W} not divisible by 16; try {max(16, H // 16 * 16)}x{max(16, W // 16 * 16)}"
        )
    return H, W


class EsbBranch(Module):
    def __init__(self, rng, cfg: ModelConfig):
        self.backbone = MiniBackbone(rng, 3, cfg.widths, cfg.k)
        e = cfg.edge_width
        self.sobels = [SobelLayer(c) for c in self.backbone.channels]
        self.erbs = [EdgeResidualBlock(rng, c, e) for c in self.backbone.channels]
        self.combiners = [EdgeResidualBlock(rng, e, e) for _ in range(2)]
        self.final = EdgeResidualBlock(rng, e, 1)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        H, W = _check_divisible(x)
        feats = self.backbone(x)
        eh, ew = H // 4, W // 4
        running = None
        for i, f in enumerate(feats):
            e = self.erbs[i](self.sobels[i](f))
            e = ops.bilinear_upsample(e, eh, ew)
            if running is None:
                running = e
                continue
            running = running + e
            if i < len(feats) - 1:
                running = self.combiners[i - 1](running)
        edge = ops.sigmoid(self.final(running))
        return feats[-1], edge


def esb_forward(x: Tensor, esb: EsbBranch) -> tuple[Tensor, Tensor]:
    return esb(x)


class NsbBranch(Module):
    def __init__(self, rng, cfg: ModelConfig):
        self.bayar = BayarConvLayer(rng, cfg.bayar_channels, 3, 5)
        self.backbone = MiniBackbone(rng, cfg.bayar_channels, cfg.widths, cfg.k)

    def forward(self, x: Tensor) -> Tensor:
        _check_divisible(x)
        return self.backbone(self.bayar(x))[-1]


def nsb_forward(x: Tensor, nsb: NsbBranch) -> Tensor:
    return nsb(x)


def fuse_and_segment(f_esb: Tensor, f_nsb: Tensor, da: DualAttention, H: int, W: int) -> tuple[Tensor, Tensor]:
    if f_esb.shape != f_nsb.shape:
        raise DimensionError(f"branch features differ: {f_esb.shape} vs {f_nsb.shape}")
    s_prime = da(ops.concat([f_esb, f_nsb], axis=1))
    seg = ops.sigmoid(ops.bilinear_upsample(s_prime, H, W))
    return s_prime, seg


class MvssModel(Module):
    def __init__(self, cfg: ModelConfig | None = None):
        self.cfg = cfg or ModelConfig()
        rng = np.random.default_rng(self.cfg.seed)
        self.esb = EsbBranch(rng, self.cfg)
        self.nsb = NsbBranch(rng, self.cfg)
        self.da = DualAttention(rng, 2 * self.cfg.k)
        if self.cfg.head == "convgem":
            self.clf_head = ConvGemHead(rng, self.cfg.schedule, self.cfg.gem_p)
        elif self.cfg.head == "gem":
            self.clf_head = GemHead(self.cfg.gem_p)
        else:
            self.clf_head = GmpHead()

    @property
    def schedule(self) -> LambdaSchedule:
        return self.cfg.schedule

    def gem_heads(self) -> list[GemHead]:
        head = self.clf_head
        if isinstance(head, ConvGemHead):
            return [head.gem]
        if isinstance(head, GemHead):
            return [head]
        return []

    def forward(self, x: Tensor, epoch: int | None = None) -> Prediction:
        return predict(x, self, epoch)


def predict(x: Tensor, model: MvssModel, epoch: int | None = None) -> Prediction:
    """Full forward pass.  In eval mode (or with ``epoch=None``) the fully
    decayed lambda is used, so the image score is GeM(Conv(S))."""
    H, W = _check_divisible(x)
    f_esb, edge = model.esb(x)
    f_nsb = model.nsb(x)
    s_prime, seg = fuse_and_segment(f_esb, f_nsb, model.da, H, W)
    if not model.training:
        epoch = None
    score = model.clf_head(seg, epoch)
    return Prediction(seg=seg, edge=edge, score=score, s_prime=s_prime)
