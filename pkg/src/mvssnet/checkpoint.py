"""Flat binary checkpoint container.

Layout (all integers little-endian unsigned, floats IEEE-754 float64 LE)::

    magic        8 bytes   b"MVSSCKPT"
    version      u32       currently 1
    epoch        u32       epochs completed
    lambda0      f64
    gamma        f64
    total_E      u32       lambda schedule horizon
    meta_len     u32
    meta         meta_len bytes, UTF-8 "key=value" lines (architecture)
    n_entries    u32
    n_entries x entry:
        name_len u16
        name     name_len bytes UTF-8 (dotted parameter / buffer path)
        kind     u8        0 = parameter, 1 = buffer
        ndim     u8
        dims     ndim x u32
        data     prod(dims) x f64, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .layers import LambdaSchedule
from .netpbm import ParseError
from .network import ModelConfig, MvssModel

MAGIC = b"MVSSCKPT"
VERSION = 1


def _meta(cfg: ModelConfig) -> bytes:
    items = {
        "widths": ",".join(map(str, cfg.widths)),
        "k": cfg.k,
        "edge_width": cfg.edge_width,
        "bayar_channels": cfg.bayar_channels,
        "head": cfg.head,
        "gem_p": repr(cfg.gem_p),
        "seed": cfg.seed,
    }
    return "".join(f"{k}={v}\n" for k, v in items.items()).encode("utf-8")


def save_checkpoint(model: MvssModel, path: str | Path, epoch: int = 0) -> None:
    s = model.schedule
    meta = _meta(model.cfg)
    chunks = [MAGIC, struct.pack("<IIddI", VERSION, epoch, s.lambda0, s.gamma, s.total_epochs)]
    chunks.append(struct.pack("<I", len(meta)) + meta)
    entries = [(n, 0, p.data) for n, p in model.named_parameters()]
    entries += [(n, 1, b) for n, b in model.named_buffers()]
    chunks.append(struct.pack("<I", len(entries)))
    for name, kind, arr in entries:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", kind, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError(f"checkpoint truncated: need {n} bytes", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> tuple[MvssModel, int]:
    """Rebuild the model from a checkpoint; returns (model in eval mode, epoch)."""
    r = _Reader(Path(path).read_bytes())
    if r.take(8) != MAGIC:
        raise ParseError("not a checkpoint (bad magic)", 0)
    version, epoch, lambda0, gamma, total = r.unpack("<IIddI")
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 8)
    (meta_len,) = r.unpack("<I")
    meta = dict(line.split("=", 1) for line in r.take(meta_len).decode("utf-8").splitlines() if line)
    cfg = ModelConfig(
        widths=tuple(int(v) for v in meta["widths"].split(",")),
        k=int(meta["k"]),
        edge_width=int(meta["edge_width"]),
        bayar_channels=int(meta["bayar_channels"]),
        head=meta["head"],
        gem_p=float(meta["gem_p"]),
        schedule=LambdaSchedule(lambda0, total, gamma),
        seed=int(meta["seed"]),
    )
    model = MvssModel(cfg)
    params = dict(model.named_parameters())
    (n_entries,) = r.unpack("<I")
    seen = set()
    for _ in range(n_entries):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        kind, ndim = r.unpack("<BB")
        dims = r.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims).astype(np.float64)
        if kind == 0:
            if name not in params or params[name].shape != arr.shape:
                raise ParseError(f"unexpected parameter {name!r} with shape {arr.shape}", r.pos)
            params[name].data[...] = arr
        else:
            model.set_buffer(name, arr)
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise ParseError(f"checkpoint lacks parameters {sorted(missing)[:3]}", r.pos)
    model.eval()
    return model, epoch
