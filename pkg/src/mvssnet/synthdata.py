"""Procedural tampered / authentic image pairs with pixel and edge masks."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .autodiff import DimensionError

KINDS = ("splice", "copymove", "inpaint", "authentic")
EDGE_RADIUS = 2
SPLICE_NOISE_RATIO = 3.0
MAX_ATTEMPTS = 10


class GenerationError(RuntimeError):
    pass


@dataclass
class GenConfig:
    height: int = 64
    width: int = 64
    region_frac: tuple[float, float] = (0.06, 0.3)
    mix: dict[str, float] = field(
        default_factory=lambda: {"splice": 0.25, "copymove": 0.25, "inpaint": 0.25, "authentic": 0.25}
    )
    n_waves: int = 4
    max_freq: float = 3.0  # cycles per image
    wave_amp: tuple[float, float] = (0.03, 0.1)
    noise: tuple[float, float] = (0.01, 0.03)  # host sensor-noise sigma range
    seed: int = 0

    def __post_init__(self):
        if self.height % 16 or self.width % 16 or self.height <= 0 or self.width <= 0:
            raise DimensionError(f"image size {self.height}x{self.width} must be a positive multiple of 16")
        lo, hi = self.region_frac
        if not 0.02 < lo <= hi < 0.5:
            raise ValueError(f"region_frac must satisfy 0.02 < lo <= hi < 0.5, got {self.region_frac}")
        if set(self.mix) - set(KINDS):
            raise ValueError(f"unknown manipulation kinds {set(self.mix) - set(KINDS)}")
        if any(v < 0 for v in self.mix.values()) or abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"mix probabilities must be nonnegative and sum to 1, got {self.mix}")


@dataclass
class Sample:
    image: np.ndarray  # (1, 3, H, W) in [0, 1]
    pixel_mask: np.ndarray  # (1, 1, H, W) in {0, 1}
    edge_mask: np.ndarray  # (1, 1, H/4, W/4) in {0, 1}
    label: int
    kind: str = "authentic"


# ---------------------------------------------------------------- images


def _texture(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    H, W = cfg.height, cfg.width
    yy, xx = np.mgrid[0:H, 0:W]
    yy = yy / H
    xx = xx / W
    img = np.empty((3, H, W))
    img[:] = rng.uniform(0.3, 0.7, size=(3, 1, 1))
    for _ in range(cfg.n_waves):
        fx, fy = rng.uniform(-cfg.max_freq, cfg.max_freq, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(*cfg.wave_amp)
        gains = rng.uniform(0.5, 1.5, size=(3, 1, 1))
        img += amp * gains * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    return img


def _finish(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)[None]


def _base(cfg: GenConfig, rng: np.random.Generator, sigma: float) -> np.ndarray:
    img = _texture(cfg, rng)
    return img + rng.normal(0.0, sigma, size=img.shape)


def gen_base(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """Smooth sinusoid texture plus per-image Gaussian sensor noise, (1, 3, H, W)."""
    sigma = rng.uniform(*cfg.noise)
    return _finish(_base(cfg, rng, sigma))


# ---------------------------------------------------------------- masks


def _region(cfg: GenConfig, rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    H, W = cfg.height, cfg.width
    lo, hi = cfg.region_frac
    for _ in range(MAX_ATTEMPTS):
        frac = rng.uniform(lo, hi)
        aspect = rng.uniform(0.6, 1.6)
        ellipse = rng.random() < 0.5
        area = frac * H * W * (4 / np.pi if ellipse else 1.0)
        rh = int(round(np.sqrt(area * aspect)))
        rw = int(round(np.sqrt(area / aspect)))
        if rh < 2 or rw < 2 or rh > H or rw > W:
            continue
        top = int(rng.integers(0, H - rh + 1))
        left = int(rng.integers(0, W - rw + 1))
        mask = np.zeros((H, W), dtype=bool)
        if ellipse:
            yy, xx = np.mgrid[0:rh, 0:rw]
            cy, cx = (rh - 1) / 2, (rw - 1) / 2
            mask[top : top + rh, left : left + rw] = ((yy - cy) / (rh / 2)) ** 2 + ((xx - cx) / (rw / 2)) ** 2 <= 1
        else:
            mask[top : top + rh, left : left + rw] = True
        if lo <= mask.mean() <= hi:
            return mask, (top, left, rh, rw)
    raise GenerationError(f"could not place a region within fraction range {cfg.region_frac}")


def _square(r: int) -> np.ndarray:
    return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)


def dilate(mask: np.ndarray, r: int = EDGE_RADIUS) -> np.ndarray:
    return ndimage.binary_dilation(mask, structure=_square(r), border_value=0)


def erode(mask: np.ndarray, r: int = EDGE_RADIUS) -> np.ndarray:
    # outside the image counts as background, so full masks erode from the border
    return ndimage.binary_erosion(mask, structure=_square(r), border_value=0)


def derive_edge_mask(pixel_mask: np.ndarray, r: int = EDGE_RADIUS) -> np.ndarray:
    """Boundary band ``dilate XOR erode`` with a (2r+1)^2 square; same shape as input."""
    m = np.asarray(pixel_mask) > 0
    shape = m.shape
    m2 = m.reshape(shape[-2:])
    if not m2.any():
        return np.zeros(shape, dtype=np.float64)
    band = dilate(m2, r) ^ erode(m2, r)
    return band.reshape(shape).astype(np.float64)


def downsample_mask(mask: np.ndarray, factor: int = 4) -> np.ndarray:
    """Block max-pooling of the trailing two axes."""
    H, W = mask.shape[-2:]
    if H % factor or W % factor:
        raise DimensionError(f"mask size {H}x{W} not divisible by {factor}")
    lead = mask.shape[:-2]
    blocks = np.asarray(mask).reshape(lead + (H // factor, factor, W // factor, factor))
    return (blocks.max(axis=(-3, -1)) > 0).astype(np.float64)


def _sample(image: np.ndarray, mask: np.ndarray, kind: str) -> Sample:
    pm = mask.astype(np.float64)[None, None]
    return Sample(
        image=image,
        pixel_mask=pm,
        edge_mask=downsample_mask(derive_edge_mask(pm)),
        label=int(pm.any()),
        kind=kind,
    )


# ---------------------------------------------------------------- manipulations


def _shift_bilinear(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Resample img at (y + dy, x + dx); sub-pixel shifts low-pass the noise."""
    return ndimage.shift(img, (0, -dy, -dx), order=1, mode="nearest")


def gen_tampered(cfg: GenConfig, rng: np.random.Generator, kind: str) -> Sample:
    if kind not in ("splice", "copymove", "inpaint"):
        raise ValueError(f"unknown manipulation kind {kind!r}")
    H, W = cfg.height, cfg.width
    sigma = rng.uniform(*cfg.noise)
    texture = _texture(cfg, rng)
    host = texture + rng.normal(0.0, sigma, size=texture.shape)
    mask, (top, left, rh, rw) = _region(cfg, rng)

    if kind == "splice":
        donor = _base(cfg, rng, SPLICE_NOISE_RATIO * sigma)
        out = np.where(mask, donor, host)
    elif kind == "copymove":
        # source window displaced by at least half the region along some axis
        for _ in range(MAX_ATTEMPTS):
            sy, sx = np.mgrid[0 : H - rh + 1, 0 : W - rw + 1]
            ok = (np.abs(sy - top) >= rh // 2) | (np.abs(sx - left) >= rw // 2)
            if ok.any():
                pick = int(rng.integers(ok.sum()))
                sy, sx = int(sy[ok][pick]), int(sx[ok][pick])
                break
            mask, (top, left, rh, rw) = _region(cfg, rng)
        else:
            raise GenerationError("could not find a distinct copy-move source")
        frac = rng.uniform(0.3, 0.7, size=2)
        moved = _shift_bilinear(host, sy - top + frac[0], sx - left + frac[1])
        out = np.where(mask, moved, host)
    else:
        smooth = ndimage.gaussian_filter(host, sigma=(0, 4, 4), mode="reflect")
        ring = dilate(mask, 3) & ~mask
        local = smooth[:, ring].mean(axis=1)[:, None, None]
        fill = 0.5 * smooth + 0.5 * local + rng.normal(0.0, 0.3 * sigma, size=host.shape)
        out = np.where(mask, fill, host)
    return _sample(_finish(out), mask, kind)


def gen_authentic(cfg: GenConfig, rng: np.random.Generator) -> Sample:
    image = gen_base(cfg, rng)
    return _sample(image, np.zeros((cfg.height, cfg.width), dtype=bool), "authentic")


# ---------------------------------------------------------------- datasets


def allocate_kinds(cfg: GenConfig, n: int) -> list[str]:
    """Largest-remainder quotas per kind, shuffled under the config seed."""
    kinds = [k for k in KINDS if cfg.mix.get(k, 0.0) > 0]
    raw = np.array([cfg.mix[k] * n for k in kinds])
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: n - counts.sum()]] += 1
    out = [k for k, c in zip(kinds, counts) for _ in range(c)]
    np.random.default_rng([cfg.seed, 0xD1CE]).shuffle(out)
    return out


def sample_at(cfg: GenConfig, index: int, kind: str) -> Sample:
    rng = np.random.default_rng([cfg.seed, index])
    if kind == "authentic":
        return gen_authentic(cfg, rng)
    return gen_tampered(cfg, rng, kind)


def generate(cfg: GenConfig, n: int) -> list[Sample]:
    return [sample_at(cfg, i, kind) for i, kind in enumerate(allocate_kinds(cfg, n))]


def write_dataset(samples: list[Sample], out_dir: str | Path) -> Path:
    from .netpbm import write_pgm, write_ppm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(samples):
        stem = f"{i:04d}"
        write_ppm(out / f"{stem}_img.ppm", s.image[0])
        write_pgm(out / f"{stem}_mask.pgm", s.pixel_mask[0, 0])
        write_pgm(out / f"{stem}_edge.pgm", s.edge_mask[0, 0])
        lines.append(f"{stem} {s.kind} {s.label}")
    (out / "index.txt").write_text("\n".join(lines) + "\n")
    return out


def read_dataset(data_dir: str | Path) -> list[Sample]:
    from .netpbm import read_pgm, read_ppm

    d = Path(data_dir)
    index = d / "index.txt"
    if not index.exists():
        raise FileNotFoundError(f"no index.txt in {d}")
    samples = []
    for line in index.read_text().splitlines():
        if not line.strip():
            continue
        stem, kind, label = line.split()
        image = read_ppm(d / f"{stem}_img.ppm")[None]
        mask = (read_pgm(d / f"{stem}_mask.pgm") > 0.5).astype(np.float64)[None, None]
        edge = (read_pgm(d / f"{stem}_edge.pgm") > 0.5).astype(np.float64)[None, None]
        samples.append(Sample(image, mask, edge, int(label), kind))
    return samples
