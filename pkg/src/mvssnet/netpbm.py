"""Binary NetPBM I/O: P6 (8-bit RGB) images and P5 (8-bit gray) masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _to_bytes(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """``image`` is (3, H, W) in [0, 1]."""
    c, h, w = image.shape
    if c != 3:
        raise ValueError(f"PPM needs 3 channels, got {c}")
    raster = _to_bytes(image).transpose(1, 2, 0).tobytes()
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + raster)


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """``gray`` is (H, W) in [0, 1]."""
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + _to_bytes(gray).tobytes())


def _parse(buf: bytes, magic: bytes) -> tuple[int, int, int]:
    """Return (width, height, raster offset) after validating the header."""
    if buf[:2] != magic:
        raise ParseError(f"expected magic {magic.decode()}, found {buf[:2]!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and comments
        while pos < len(buf) and (buf[pos : pos + 1].isspace() or buf[pos : pos + 1] == b"#"):
            if buf[pos : pos + 1] == b"#":
                end = buf.find(b"\n", pos)
                pos = len(buf) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(buf) and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ParseError("truncated or malformed header field", start)
        fields.append(int(buf[start:pos]))
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ParseError("missing whitespace after header", pos)
    pos += 1
    w, h, maxval = fields
    if w <= 0 or h <= 0:
        raise ParseError(f"invalid dimensions {w}x{h}", pos)
    if maxval != 255:
        raise ParseError(f"only 8-bit files supported, maxval {maxval}", pos)
    return w, h, pos


def _read(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    w, h, pos = _parse(buf, magic)
    need = w * h * channels
    if len(buf) - pos < need:
        raise ParseError(f"raster truncated: need {need} bytes, have {len(buf) - pos}", len(buf))
    raster = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).astype(np.float64) / 255.0
    return raster.reshape(h, w, channels)


def read_ppm(path: str | Path) -> np.ndarray:
    """(3, H, W) float image in [0, 1]."""
    return np.ascontiguousarray(_read(path, b"P6", 3).transpose(2, 0, 1))


def read_pgm(path: str | Path) -> np.ndarray:
    """(H, W) float image in [0, 1]."""
    return _read(path, b"P5", 1)[:, :, 0]
