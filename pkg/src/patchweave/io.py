"""Grayscale image and mask files: PGM (P2/P5) natively, PNG through Pillow.

Pixel values come back as float64 on the 0-255 scale. 8-bit data is mapped
losslessly on read and rounded to nearest (with clipping) on write, so a
read/write cycle of an 8-bit PGM reproduces the file byte for byte.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

PGM_SUFFIXES = {".pgm", ".pnm"}
PNG_SUFFIXES = {".png"}

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    while len(tokens) < count:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ValueError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _header_tokens(data, 4)
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a graymap (magic {magic!r})")
    width, height, maxval = int(w), int(h), int(maxval)
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: invalid PGM header")
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        raster = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        n = width * height
        if len(raster) < n * dtype.itemsize:
            raise ValueError(f"{path}: truncated raster")
        values = np.frombuffer(raster, dtype=dtype, count=n)
    else:
        body = re.sub(rb"#[^\n]*", b"", data[pos:])
        values = np.array(body.split(), dtype=np.int64)
        if values.size < width * height:
            raise ValueError(f"{path}: truncated raster")
        values = values[: width * height]
    img = values.reshape(height, width).astype(np.float64)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def to_uint8(u: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(u, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_pgm(path: str | os.PathLike, u: np.ndarray, binary: bool = True) -> None:
    px = to_uint8(u)
    h, w = px.shape
    if binary:
        payload = f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes()
    else:
        rows = (" ".join(str(int(p)) for p in row) for row in px)
        payload = (f"P2\n{w} {h}\n255\n" + "\n".join(rows) + "\n").encode("ascii")
    Path(path).write_bytes(payload)


def _read_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode.startswith("I;16") or im.mode == "I":
            return np.asarray(im, dtype=np.float64) * (255.0 / 65535.0)
        return np.asarray(im.convert("L"), dtype=np.float64)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read a grayscale PGM or PNG file (format sniffed from the magic bytes)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"\x89PNG"):
        return _read_png(path)
    return read_pgm(path)


def write_image(path: str | os.PathLike, u: np.ndarray) -> None:
    """Write ``u`` as 8-bit grayscale; the format follows the file suffix."""
    path = Path(path)
    if path.suffix.lower() in PNG_SUFFIXES:
        from PIL import Image

        Image.fromarray(to_uint8(u), mode="L").save(path, format="PNG")
    elif path.suffix.lower() in PGM_SUFFIXES:
        write_pgm(path, u)
    else:
        raise ConfigurationError(f"unsupported output format {path.suffix!r} (use .pgm or .png)")


def read_mask(path: str | os.PathLike, threshold: float = 128.0) -> np.ndarray:
    """Hole mask from an image file: intensity >= ``threshold`` marks a hole."""
    return read_image(path) >= threshold


def write_mask(path: str | os.PathLike, hole: np.ndarray) -> None:
    write_image(path, np.where(np.asarray(hole, dtype=bool), 255.0, 0.0))
