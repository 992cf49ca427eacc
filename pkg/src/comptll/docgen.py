"""Seeded generator of handwriting-like document pages with baseline masks.

Pages carry columns of pseudo-text lines: connected random-walk strokes of
varying height and thickness sitting on a skewed, gently oscillating
baseline, with optional descenders that touch the next line, marginalia
blobs and vertical stripes as unlabeled distractors. The ground truth
marks each baseline as a strip 6% of the line pitch tall (at least 5 px).

Nothing here renders fonts; the generator only needs text-like texture and
exact, reproducible geometry. Every page derives its own RNG stream from
(seed, page index).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jpeg_codec
from .pgm import write_pgm


@dataclass(frozen=True)
class DocSpec:
    seed: int = 0
    side: int = 512
    columns: int = 2
    lines_per_column: tuple[int, int] = (3, 7)
    skew_deg: tuple[float, float] = (-3.0, 3.0)
    touch_probability: float = 0.15
    noise_level: float = 5.0
    marginalia_probability: float = 0.2
    stripe_probability: float = 0.1

    def __post_init__(self):
        if self.side < 64:
            raise ValueError(f"side {self.side} too small for a page")
        if not 1 <= self.columns <= 4:
            raise ValueError(f"columns must be in [1, 4], got {self.columns}")
        lo, hi = self.lines_per_column
        if lo < 1 or hi < lo:
            raise ValueError(f"bad lines_per_column range {self.lines_per_column}")
        if self.skew_deg[1] < self.skew_deg[0]:
            raise ValueError(f"bad skew range {self.skew_deg}")
        for name in ("touch_probability", "marginalia_probability",
                     "stripe_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if self._column_width() < 24:
            raise ValueError(
                f"{self.columns} columns on a {self.side}px page leave "
                f"{self._column_width()}px per column; too narrow")

    def _column_width(self) -> int:
        margin = round(0.08 * self.side)
        gap = round(0.05 * self.side)
        return (self.side - 2 * margin - (self.columns - 1) * gap) // self.columns


@dataclass
class LabeledDoc:
    image: np.ndarray  # (side, side) uint8
    mask: np.ndarray   # (side, side) uint8 in {0, 1}
    spec: DocSpec = field(repr=False)
    index: int = 0
    line_count: int = 0


def strip_height(pitch: float) -> int:
    return max(5, round(0.06 * pitch))


def _render_line(img, mask, rng, x0, x1, y_base, pitch, skew_deg, touch_p, side):
    """Draw one pseudo-text line and its baseline strip."""
    xs = np.arange(x0, x1)
    L = xs.size
    xm = (x0 + x1) / 2.0

    slope = np.tan(np.deg2rad(skew_deg))
    amp = 0.05 * pitch * rng.uniform(0.3, 1.0)
    freq = rng.uniform(0.5, 2.5)
    phase = rng.uniform(0, 2 * np.pi)
    base = y_base + slope * (xs - xm) + amp * np.sin(
        2 * np.pi * freq * (xs - x0) / max(L, 1) + phase)
    base = np.clip(np.rint(base), 4, side - 5).astype(np.int64)

    # stroke top edge: reflected random walk inside the x-height band
    band = 0.55 * pitch
    steps = rng.normal(0.0, 0.16 * band, size=L)
    walk = np.clip(np.cumsum(steps) + rng.uniform(0.45, 0.8) * band,
                   0.3 * band, band)
    top = base - np.maximum(np.rint(walk).astype(np.int64), 2)

    # ink column darkness and thickness vary slowly along the line
    darkness = np.clip(rng.normal(55, 22, size=L), 15, 110).astype(np.uint8)
    thick = np.clip(np.rint(np.cumsum(rng.normal(0, 0.35, size=L)) / 4 + 1.6),
                    1, max(2, side // 170 + 1)).astype(np.int64)

    # word segmentation: ink runs separated by short gaps
    ink = np.zeros(L, dtype=bool)
    pos = rng.integers(0, 4)
    while pos < L:
        w = int(rng.integers(6, 26))
        ink[pos : pos + w] = True
        pos += w + int(rng.integers(2, 8))
    # intra-word pen lifts give a glyph-ish rhythm
    lift = rng.random(L) < 0.12
    ink &= ~lift

    for i in np.flatnonzero(ink):
        x = int(xs[i])
        img[top[i] : base[i] + 1, x : x + int(thick[i])] = darkness[i]

    # occasional descender below the baseline; may reach into the next line
    word_starts = np.flatnonzero(ink & ~np.roll(ink, 1))
    for i in word_starts:
        if rng.random() < touch_p:
            depth = int(rng.uniform(0.35, 1.05) * (pitch - band))
            x = int(xs[min(i + int(rng.integers(0, 5)), L - 1)])
            y1 = min(int(base[i]) + depth, side - 2)
            img[base[i] : y1, x : x + 2] = darkness[i]

    sh = strip_height(pitch)
    y_top = base - sh // 2
    for dy in range(sh):
        rows = np.clip(y_top + dy, 0, side - 1)
        mask[rows, xs] = 1


def _render_page(spec: DocSpec, index: int) -> LabeledDoc:
    rng = np.random.default_rng((spec.seed, index))
    side = spec.side
    shade = rng.integers(226, 242)
    img = np.full((side, side), shade, dtype=np.float64)
    if spec.noise_level > 0:
        img += rng.normal(0.0, spec.noise_level, size=img.shape)
    img = np.clip(img, 0, 255).astype(np.uint8)
    mask = np.zeros((side, side), dtype=np.uint8)

    margin = round(0.08 * side)
    gap = round(0.05 * side)
    top_m = round(0.07 * side)
    cw = spec._column_width()

    total_lines = 0
    for c in range(spec.columns):
        x0 = margin + c * (cw + gap)
        x1 = x0 + cw
        n = int(rng.integers(spec.lines_per_column[0],
                             spec.lines_per_column[1] + 1))
        total_lines += n
        usable = side - 2 * top_m
        pitch = usable / n
        for ell in range(n):
            y = top_m + pitch * (ell + 0.72) + rng.uniform(-0.08, 0.08) * pitch
            skew = rng.uniform(*spec.skew_deg)
            _render_line(img, mask, rng, x0, x1, y, pitch, skew,
                         spec.touch_probability, side)

    if rng.random() < spec.marginalia_probability:
        # unlabeled blob in the outer margin
        on_left = rng.random() < 0.5
        cx = rng.integers(2, max(3, margin - 2))
        if not on_left:
            cx = side - 1 - cx
        cy = rng.integers(side // 6, 5 * side // 6)
        ry, rx = rng.integers(6, max(7, side // 18)), rng.integers(2, max(3, margin // 2))
        yy, xx = np.ogrid[:side, :side]
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        img[blob] = rng.integers(40, 110)

    if rng.random() < spec.stripe_probability:
        # unlabeled vertical rule
        sx = int(rng.integers(margin, side - margin))
        width = int(rng.integers(1, 3))
        img[:, sx : sx + width] = rng.integers(60, 130)

    return LabeledDoc(img, mask, spec, index, total_lines)


def generate(spec: DocSpec, count: int) -> list[LabeledDoc]:
    """Deterministically fabricate ``count`` labeled pages."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [_render_page(spec, i) for i in range(count)]


def export_dataset(docs: list[LabeledDoc], out_dir: str | Path,
                   quality: int = 50) -> list[dict]:
    """Write <id>.pgm, <id>.jpg (through the codec at ``quality``) and
    <id>_mask.pgm per page plus a JSON-lines manifest; returns the rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for doc in docs:
        doc_id = f"doc_{doc.index:05d}"
        pgm = out / f"{doc_id}.pgm"
        jpg = out / f"{doc_id}.jpg"
        msk = out / f"{doc_id}_mask.pgm"
        write_pgm(pgm, doc.image)
        jpg.write_bytes(jpeg_codec.encode(doc.image, quality))
        write_pgm(msk, doc.mask * 255)
        rows.append({
            "id": doc_id,
            "pgm": pgm.name,
            "jpg": jpg.name,
            "mask": msk.name,
            "split": "test" if doc.index % 10 == 9 else "train",
        })
    with open(out / "manifest.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return rows


def load_manifest(data_dir: str | Path) -> list[dict]:
    path = Path(data_dir) / "manifest.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.jsonl under {data_dir}")
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
