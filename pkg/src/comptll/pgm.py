"""Binary PGM (P5, maxval 255) reader and writer.

PGM is the raw interchange format for grayscale images and masks; it
parses with a handful of lines and needs no imaging dependency.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise PgmError(f"PGM wants a 2-d image, got shape {img.shape}")
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise PgmError(f"{path}: not a binary PGM (missing P5 magic)")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them; one whitespace byte then raster.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise PgmError(f"{path}: malformed PGM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    w, h, maxval = fields
    if maxval != 255:
        raise PgmError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace separating header from raster
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise PgmError(f"{path}: raster truncated ({len(raster)} of {w * h} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
