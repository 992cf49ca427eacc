"""Turn a coefficient grid into the single-channel plane the network eats.

Each 8x8 quantized block is tiled at its spatial block position, giving a
coefficient image the same size as the pixel image; resizing to the model
side picks whole blocks nearest-neighbor style so no block is ever split
across frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jpeg_codec import QuantizedBlockGrid

NORM_SCALE = 1024.0  # bound on |quantized DC|; keeps inputs within [-2, 2]

VALID_SIDES = (256, 512, 1024)


@dataclass
class CoeffPlane:
    """side x side float32 plane of normalized quantized coefficients."""

    values: np.ndarray
    side: int
    norm_scale: float = NORM_SCALE


def assemble_plane(
    grid: QuantizedBlockGrid, side: int, dequantized: bool = False
) -> CoeffPlane:
    """Lay the grid out spatially and resize to ``side`` by whole blocks.

    ``dequantized`` multiplies the levels by the quantization table first;
    the default feeds raw quantized levels.
    """
    if side not in VALID_SIDES:
        raise ValueError(f"side must be one of {VALID_SIDES}, got {side}")
    bh, bw = grid.blocks_h, grid.blocks_w
    if bh == 0 or bw == 0:
        raise ValueError("empty coefficient grid")

    blocks = grid.blocks.astype(np.float64)
    if dequantized:
        blocks = blocks * grid.table.q

    nb = side // 8
    # whole-block nearest neighbor: output block k comes from floor(k * in/out)
    rows = (np.arange(nb) * bh) // nb
    cols = (np.arange(nb) * bw) // nb
    picked = blocks[np.ix_(rows, cols)]                    # (nb, nb, 8, 8)
    plane = picked.transpose(0, 2, 1, 3).reshape(side, side)
    return CoeffPlane((plane / NORM_SCALE).astype(np.float32), side)


def plane_to_grid(plane: CoeffPlane, table, orig_width: int, orig_height: int):
    """Invert :func:`assemble_plane` for the no-resize case (tests use this
    to show the mapping is a pure reshape)."""
    side = plane.side
    nb = side // 8
    vals = plane.values.astype(np.float64) * plane.norm_scale
    blocks = vals.reshape(nb, 8, nb, 8).transpose(0, 2, 1, 3)
    blocks = np.rint(blocks).astype(np.int32)
    return QuantizedBlockGrid(blocks, table, orig_width, orig_height)
