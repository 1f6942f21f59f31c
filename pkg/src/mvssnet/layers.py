"""Forensic layers: Sobel attention, edge residual blocks, BayarConv,
dual-attention fusion and the GMP / GeM / ConvGeM image-score heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import DTYPE, DimensionError, DomainError, Parameter, Tensor, UsageError
from .module import BatchNorm2d, Conv2d, Module

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
SOBEL_EPS = 1e-8
L2_EPS = 1e-8
P_MIN = 0.1


class IntegrityError(RuntimeError):
    """A constrained layer was used while its constraints do not hold."""


class DegenerateFilterError(ArithmeticError):
    """BayarConv projection impossible: non-center weights sum to ~0."""


# ---------------------------------------------------------------- Sobel layer


class SobelLayer(Module):
    """Edge attention: fixed Sobel magnitude -> BN -> channel L2 norm -> sigmoid."""

    def __init__(self, channels: int):
        self.bn = BatchNorm2d(channels)
        self.kernels = Tensor(np.stack([SOBEL_X, SOBEL_Y])[:, None])  # constant, (2, 1, 3, 3)

    def gradients(self, F: Tensor) -> Tensor:
        """Depthwise Sobel responses, shape (n, c, 2, h, w) flattened to (n*c, 2, h, w)."""
        n, c, h, w = F.shape
        x = ops.reshape(F, (n * c, 1, h, w))
        # replicate padding: a constant field has zero gradient at the border too
        x = ops.pad_replicate(x, 1)
        return ops.conv2d(x, self.kernels)

    def forward(self, F: Tensor) -> Tensor:
        n, c, h, w = F.shape
        if h < 1 or w < 1:
            raise DimensionError(f"sobel_attend needs a nonempty feature map, got {h}x{w}")
        g = self.gradients(F)
        mag = ops.sqrt(ops.add_const(ops.sum(g * g, axes=1), SOBEL_EPS))
        mag = ops.reshape(mag, (n, c, h, w))
        m = self.bn(mag)
        norm = ops.sqrt(ops.add_const(ops.sum(m * m, axes=1), 1e-16))
        attn = ops.sigmoid(m / ops.add_const(norm, L2_EPS))
        return F * attn


def sobel_attend(F: Tensor, layer: SobelLayer) -> Tensor:
    return layer(F)


# ---------------------------------------------------------------- ERB


class EdgeResidualBlock(Module):
    """conv3x3 -> BN -> ReLU -> conv3x3, plus an identity or 1x1-projected skip."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int):
        self.conv1 = Conv2d(rng, c_in, c_out, 3, bias=False)  # BN cancels a bias
        self.bn = BatchNorm2d(c_out)
        self.conv2 = Conv2d(rng, c_out, c_out, 3)
        self.proj = Conv2d(rng, c_in, c_out, 1) if c_in != c_out else None

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv2(ops.relu(self.bn(self.conv1(x))))
        skip = x if self.proj is None else self.proj(x)
        return y + skip


def erb_forward(x: Tensor, block: EdgeResidualBlock) -> Tensor:
    return block(x)


# ---------------------------------------------------------------- BayarConv


class BayarConvLayer(Module):
    """5x5 prediction-error filters: centre -1, remaining taps sum to 1.

    The constraint is per 2-D kernel slice ``weight[o, i]``.  Set ``enforce``
    to False to skip the call-time integrity check (finite-difference probes
    perturb the weights off the constraint set).
    """

    def __init__(self, rng: np.random.Generator, c_out: int = 3, c_in: int = 3, k: int = 5):
        self.c_in, self.k = c_in, k
        self.rng = rng
        self.enforce = True
        self.weight = Parameter(self._draw((c_out, c_in)))
        bayar_project(self)

    def _draw(self, lead: tuple[int, ...]) -> np.ndarray:
        w = self.rng.uniform(-1.0, 1.0, size=lead + (self.k, self.k)).astype(DTYPE)
        c = self.k // 2
        w[..., c, c] = 0.0
        return w

    def constraint_residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """(centre + 1, off-centre sum - 1) per kernel slice."""
        w = self.weight.data
        c = self.k // 2
        centre = w[:, :, c, c]
        off = w.sum(axis=(2, 3)) - centre
        return centre + 1.0, off - 1.0

    def satisfies_constraints(self, tol: float = 1e-9) -> bool:
        dc, ds = self.constraint_residuals()
        return bool(np.all(dc == 0.0) and np.all(np.abs(ds) <= tol))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise DimensionError(f"BayarConv expects (n, {self.c_in}, h, w) input, got {x.shape}")
        if self.enforce and not self.satisfies_constraints():
            raise IntegrityError("BayarConv weights violate the prediction-error constraints; call bayar_project")
        # replicate padding keeps the whole noise view of a flat image at zero
        return ops.conv2d(ops.pad_replicate(x, self.k // 2), self.weight)


def bayar_forward(x: Tensor, layer: BayarConvLayer) -> Tensor:
    return layer(x)


def bayar_project(layer: BayarConvLayer) -> None:
    """Rescale off-centre taps to sum 1 and pin the centre to -1, in place."""
    w = layer.weight.data
    c = layer.k // 2
    for o in range(w.shape[0]):
        for i in range(w.shape[1]):
            kern = w[o, i]
            if kern[c, c] == -1.0 and abs(kern.sum() - kern[c, c] - 1.0) <= 1e-12:
                continue  # already on the constraint set; keep it bit-identical
            for attempt in range(2):
                kern[c, c] = 0.0
                s = kern.sum()
                if abs(s) >= 1e-8:
                    break
                if attempt == 1:
                    raise DegenerateFilterError(f"filter ({o}, {i}) has off-centre sum {s:.3e} after redraw")
                kern[...] = layer._draw(())
            kern /= s
            kern[c, c] = -1.0


# ---------------------------------------------------------------- pooling heads


def gmp_pool(S: Tensor) -> Tensor:
    return ops.max(S, axes=(1, 2, 3))


class GemHead(Module):
    def __init__(self, p: float = 3.0):
        self.p = Parameter(np.array([p]))

    def clamp(self) -> None:
        np.maximum(self.p.data, P_MIN, out=self.p.data)

    def forward(self, S: Tensor, epoch: int | None = None) -> Tensor:
        return gem_pool(S, self)


def gem_pool(S: Tensor, head: GemHead) -> Tensor:
    """Generalised mean ``(mean S^p)^(1/p)`` per sample."""
    if np.any(S.data <= 0):
        raise DomainError("gem_pool needs strictly positive inputs")
    p = head.p
    if p.data[0] < P_MIN:
        raise DomainError(f"GeM exponent {p.data[0]} below minimum {P_MIN}")
    m = ops.mean(ops.pow(S, p), axes=(1, 2, 3))
    return ops.pow(m, ops.div(1.0, p))


class GmpHead(Module):
    def forward(self, S: Tensor, epoch: int | None = None) -> Tensor:
        return gmp_pool(S)


@dataclass
class LambdaSchedule:
    lambda0: float = 0.99
    total_epochs: int = 59
    gamma: float = 2.0


def lambda_at(schedule: LambdaSchedule, epoch: float) -> float:
    """``lambda0 * (1 - (e/E)^gamma)``: slow early decay, fast late."""
    E = schedule.total_epochs
    if E <= 0:
        raise UsageError("lambda schedule needs total_epochs > 0")
    if not 0 <= epoch <= E:
        raise UsageError(f"epoch {epoch} outside [0, {E}]")
    return schedule.lambda0 * (1.0 - (epoch / E) ** schedule.gamma)


class ConvBlock(Module):
    """conv3x3(1->8) -> ReLU -> conv3x3(8->1) -> sigmoid at full resolution."""

    def __init__(self, rng: np.random.Generator, width: int = 8):
        self.conv1 = Conv2d(rng, 1, width, 3)
        self.conv2 = Conv2d(rng, width, 1, 3)

    def forward(self, S: Tensor) -> Tensor:
        return ops.sigmoid(self.conv2(ops.relu(self.conv1(S))))


class ConvGemHead(Module):
    def __init__(self, rng: np.random.Generator, schedule: LambdaSchedule | None = None, p: float = 3.0):
        self.gem = GemHead(p)
        self.conv_block = ConvBlock(rng)
        self.schedule = schedule or LambdaSchedule()

    def forward(self, S: Tensor, epoch: int | None = None) -> Tensor:
        return convgem(S, self, self.schedule.total_epochs if epoch is None else epoch)


def convgem(S: Tensor, head: ConvGemHead, epoch: int) -> Tensor:
    lam = lambda_at(head.schedule, epoch)
    if lam == 1.0:
        return gem_pool(S, head.gem)
    deep = gem_pool(head.conv_block(S), head.gem)
    if lam == 0.0:
        return deep
    return ops.scale(gem_pool(S, head.gem), lam) + ops.scale(deep, 1.0 - lam)


# ---------------------------------------------------------------- dual attention


class DualAttention(Module):
    """Position + channel attention with zero-initialised gates, then 1x1 conv to one map."""

    def __init__(self, rng: np.random.Generator, channels: int, reduction: int = 8):
        cq = max(1, channels // reduction)
        self.channels = channels
        self.query = Conv2d(rng, channels, cq, 1)
        self.key = Conv2d(rng, channels, cq, 1)
        self.value = Conv2d(rng, channels, channels, 1)
        self.gamma_pa = Parameter(np.zeros(1))
        self.gamma_ca = Parameter(np.zeros(1))
        self.out_conv = Conv2d(rng, channels, 1, 1)

    def position(self, F: Tensor) -> Tensor:
        n, c, h, w = F.shape
        N = h * w
        q = ops.reshape(self.query(F), (n, -1, N))
        k = ops.reshape(self.key(F), (n, -1, N))
        attn = ops.softmax(ops.matmul(ops.transpose(q, (0, 2, 1)), k), axis=-1)  # (n, N, N)
        v = ops.reshape(self.value(F), (n, c, N))
        out = ops.reshape(ops.matmul(v, ops.transpose(attn, (0, 2, 1))), (n, c, h, w))
        return self.gamma_pa * out + F

    def channel(self, F: Tensor) -> Tensor:
        n, c, h, w = F.shape
        a = ops.reshape(F, (n, c, h * w))
        attn = ops.softmax(ops.matmul(a, ops.transpose(a, (0, 2, 1))), axis=-1)  # (n, c, c)
        out = ops.reshape(ops.matmul(attn, a), (n, c, h, w))
        return self.gamma_ca * out + F

    def forward(self, F: Tensor) -> Tensor:
        if F.ndim != 4 or F.shape[1] != self.channels:
            raise DimensionError(f"DualAttention expects {self.channels} channels, got shape {F.shape}")
        return self.out_conv(self.position(F) + self.channel(F))


def dual_attention(F: Tensor, da: DualAttention) -> Tensor:
    return da(F)
