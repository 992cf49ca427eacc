"""Pixel-level mask evaluation and probability-map post-processing.

Scores are percentages. With both masks empty every metric is 100 (nothing
to find, nothing found); any other empty denominator scores 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class SegReport:
    precision: float
    recall: float
    f_measure: float
    dice: float
    iou: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _as_mask(m: np.ndarray) -> np.ndarray:
    a = np.asarray(m)
    if a.dtype == bool:
        return a
    if not np.isin(a, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return a.astype(bool)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Exact pixel counts of prediction vs ground truth."""
    p, g = _as_mask(pred), _as_mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def report(c: ConfusionCounts) -> SegReport:
    """Precision, recall, F-measure, overlap (dice) and IoU, all in [0, 100]."""
    if min(c.tp, c.fp, c.fn, c.tn) < 0:
        raise ValueError("negative confusion counts")
    if c.tp + c.fp + c.fn == 0:
        return SegReport(100.0, 100.0, 100.0, 100.0, 100.0)
    precision = 100.0 * c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = 100.0 * c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    dice = 100.0 * 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn)
    iou = 100.0 * c.tp / (c.tp + c.fp + c.fn)
    return SegReport(precision, recall, f, dice, iou)


def evaluate(pred: np.ndarray, gt: np.ndarray) -> SegReport:
    return report(confusion(pred, gt))


def post_process(prob: np.ndarray, threshold: float = 0.5,
                 min_area: int = 64) -> np.ndarray:
    """Binarize a probability map and clean it up.

    Thresholds, drops 4-connected components smaller than ``min_area``,
    then applies one 3x3 morphological closing (computed on a zero-padded
    plane, so the operator is idempotent).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    p = np.asarray(prob)
    if p.ndim != 2:
        raise ValueError(f"probability map must be 2-d, got shape {p.shape}")
    mask = p > threshold

    if min_area > 1 and mask.any():
        labels, n = ndimage.label(mask)  # default structure is 4-connected
        if n:
            areas = np.bincount(labels.ravel())
            areas[0] = min_area  # background is never dropped by this path
            mask = areas[labels] >= min_area
            mask &= labels > 0

    if mask.any():
        padded = np.pad(mask, 2)
        closed = ndimage.binary_erosion(
            ndimage.binary_dilation(padded, np.ones((3, 3), bool)),
            np.ones((3, 3), bool))
        mask = closed[2:-2, 2:-2]
    return mask.astype(np.uint8)
