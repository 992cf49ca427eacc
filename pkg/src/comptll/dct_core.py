"""8x8 block transforms: forward/inverse DCT, quantization, zigzag order.

Everything in this module operates on single 8x8 blocks as numpy arrays.
The forward DCT of a block ``B`` is

    F[u,v] = c_u*c_v/4 * sum_{i,j} B[i,j] * cos((2i+1)u*pi/16) * cos((2j+1)v*pi/16)

with ``c_0 = 1/sqrt(2)`` and ``c_k = 1`` otherwise, computed here as a pair
of matrix products in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK = 8

# Standard luminance quantization table (the one with 16 in the DC slot),
# in natural row-major frequency order.
BASE_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int32,
)

# Zigzag scan: ZIGZAG_INDEX[k] is the flat (row-major) position of the k-th
# coefficient in scan order; index 0 is DC.
ZIGZAG_INDEX = np.array(
    [
        0,  1,  8, 16,  9,  2,  3, 10,
        17, 24, 32, 25, 18, 11,  4,  5,
        12, 19, 26, 33, 40, 48, 41, 34,
        27, 20, 13,  6,  7, 14, 21, 28,
        35, 42, 49, 56, 57, 50, 43, 36,
        29, 22, 15, 23, 30, 37, 44, 51,
        58, 59, 52, 45, 38, 31, 39, 46,
        53, 60, 61, 54, 47, 55, 62, 63,
    ],
    dtype=np.int64,
)

_ZIGZAG_INVERSE = np.argsort(ZIGZAG_INDEX)


def _cos_matrix() -> np.ndarray:
    u = np.arange(BLOCK).reshape(-1, 1)
    i = np.arange(BLOCK).reshape(1, -1)
    c = np.cos((2 * i + 1) * u * np.pi / 16) / 2.0
    c[0, :] /= np.sqrt(2.0)
    return c


_DCT_MAT = _cos_matrix()          # orthonormal: _DCT_MAT @ _DCT_MAT.T = I


@dataclass(frozen=True)
class QuantTable:
    """8x8 divisor table plus the quality setting it was scaled for.

    quality 0 means "unknown": the table came from a decoded stream and is
    not a quality scaling of the default base table.
    """

    q: np.ndarray
    quality: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.int32)
        if q.shape != (BLOCK, BLOCK):
            raise ValueError(f"quant table must be 8x8, got {q.shape}")
        if np.any(q < 1) or np.any(q > 255):
            raise ValueError("quant table entries must lie in [1, 255]")
        if not 0 <= self.quality <= 100:
            raise ValueError(f"quality must be in [0, 100], got {self.quality}")
        object.__setattr__(self, "q", q)


def fdct(block: np.ndarray, level_shift: bool = True) -> np.ndarray:
    """Forward DCT of one 8x8 sample block; returns float64 coefficients.

    With ``level_shift`` the samples are shifted by -128 first, as the
    codec does; without it the raw sample values are transformed (useful
    for inspecting coefficient magnitudes of bright blocks directly).
    """
    b = np.asarray(block, dtype=np.float64)
    if b.shape != (BLOCK, BLOCK):
        raise ValueError(f"expected an 8x8 block, got {b.shape}")
    if level_shift:
        b = b - 128.0
    return _DCT_MAT @ b @ _DCT_MAT.T


def idct(coeffs: np.ndarray, level_shift: bool = True) -> np.ndarray:
    """Inverse DCT; returns uint8 samples rounded and clamped to [0, 255]."""
    f = np.asarray(coeffs, dtype=np.float64)
    if f.shape != (BLOCK, BLOCK):
        raise ValueError(f"expected an 8x8 block, got {f.shape}")
    b = _DCT_MAT.T @ f @ _DCT_MAT
    if level_shift:
        b = b + 128.0
    return np.clip(np.rint(b), 0, 255).astype(np.uint8)


def quantize(coeffs: np.ndarray, table: QuantTable) -> np.ndarray:
    """Divide coefficients by the table, rounding halves away from zero."""
    r = np.asarray(coeffs, dtype=np.float64) / table.q
    return (np.sign(r) * np.floor(np.abs(r) + 0.5)).astype(np.int32)


def dequantize(qblock: np.ndarray, table: QuantTable) -> np.ndarray:
    """Multiply quantized levels back up to coefficient scale."""
    return np.asarray(qblock, dtype=np.float64) * table.q


def scale_quant_table(base: np.ndarray, quality: int) -> QuantTable:
    """Scale a base table to a quality setting in [1, 100].

    quality 50 reproduces the base table; higher quality shrinks the
    divisors (100 pins every entry at 1), lower quality grows them, with
    results clamped to [1, 255].
    """
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    base = np.asarray(base, dtype=np.int64)
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    scaled = (base * scale + 50) // 100
    return QuantTable(np.clip(scaled, 1, 255).astype(np.int32), quality)


def zigzag(block: np.ndarray) -> np.ndarray:
    """Flatten an 8x8 block into the 64-entry zigzag scan sequence."""
    b = np.asarray(block)
    if b.shape != (BLOCK, BLOCK):
        raise ValueError(f"expected an 8x8 block, got {b.shape}")
    return b.reshape(64)[ZIGZAG_INDEX].copy()


def inverse_zigzag(seq: np.ndarray) -> np.ndarray:
    """Rebuild the 8x8 block from a 64-entry zigzag sequence."""
    s = np.asarray(seq)
    if s.shape != (64,):
        raise ValueError(f"expected 64 entries, got {s.shape}")
    return s[_ZIGZAG_INVERSE].reshape(BLOCK, BLOCK).copy()
