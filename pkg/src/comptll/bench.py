"""Wall-clock and storage comparison of pixel-domain vs coefficient-domain
document processing.

All timings are medians over repeated runs with min/max dispersion, taken
single-threaded, and every report carries enough context (machine, library
versions, corpus size) to interpret the numbers later. Reductions are
computed from the same run's raw figures.
"""

from __future__ import annotations

import platform
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import unet
from .coeff_input import assemble_plane
from .jpeg_codec import full_decode, partial_decode
from .trainer import resize_nearest


def _context(n_images: int, repetitions: int) -> dict:
    return {
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "n_images": n_images,
        "repetitions": repetitions,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


@dataclass
class CostReport:
    full_decode_ms: float
    partial_decode_ms: float
    reduction_pct: float
    dispersion_pct: float
    context: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineReport:
    pixel: dict
    dct: dict
    pixel_total_ms: float
    dct_total_ms: float
    gain_pct: float
    context: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class StorageReport:
    raw_bytes: int
    jpeg_bytes: int
    qdb_bytes: int
    jpeg_reduction_pct: float
    qdb_reduction_pct: float
    context: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _median_and_spread(samples: list[float]) -> tuple[float, float]:
    med = statistics.median(samples)
    spread = 100.0 * (max(samples) - min(samples)) / med if med else 0.0
    return med, spread


def bench_decode(streams: list[bytes], repetitions: int = 5) -> CostReport:
    """Median wall time of full vs entropy-only decoding over a corpus."""
    if len(streams) < 20:
        raise ValueError(f"need at least 20 streams, got {len(streams)}")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")

    full_ms, partial_ms = [], []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for s in streams:
            full_decode(s)
        full_ms.append((time.perf_counter() - t0) * 1000)

        t0 = time.perf_counter()
        for s in streams:
            partial_decode(s)
        partial_ms.append((time.perf_counter() - t0) * 1000)

    fmed, fspread = _median_and_spread(full_ms)
    pmed, pspread = _median_and_spread(partial_ms)
    return CostReport(
        full_decode_ms=fmed,
        partial_decode_ms=pmed,
        reduction_pct=100.0 * (fmed - pmed) / fmed,
        dispersion_pct=max(fspread, pspread),
        context=_context(len(streams), repetitions),
    )


def bench_pipeline(streams: list[bytes], params: unet.UNetParams,
                   repetitions: int = 3, batch_size: int = 5) -> PipelineReport:
    """Per-phase and end-to-end time of forwarding a corpus through the
    model, decoding to pixels first vs assembling coefficient planes."""
    if not streams:
        raise ValueError("empty corpus")
    side = params.config.input_side

    def pixel_batch(chunk):
        t0 = time.perf_counter()
        images = [full_decode(s) for s in chunk]
        t1 = time.perf_counter()
        planes = [resize_nearest(im, side, side).astype(np.float32) / 255.0
                  for im in images]
        batch = np.stack(planes)[:, None]
        t2 = time.perf_counter()
        unet.forward(params, batch, "eval")
        t3 = time.perf_counter()
        return t1 - t0, t2 - t1, t3 - t2

    def dct_batch(chunk):
        t0 = time.perf_counter()
        grids = [partial_decode(s) for s in chunk]
        t1 = time.perf_counter()
        batch = np.stack([assemble_plane(g, side).values for g in grids])[:, None]
        t2 = time.perf_counter()
        unet.forward(params, batch, "eval")
        t3 = time.perf_counter()
        return t1 - t0, t2 - t1, t3 - t2

    def run(batch_fn):
        totals = []
        phase_runs = []
        for _ in range(repetitions):
            phases = np.zeros(3)
            t0 = time.perf_counter()
            for lo in range(0, len(streams), batch_size):
                phases += batch_fn(streams[lo : lo + batch_size])
            totals.append((time.perf_counter() - t0) * 1000)
            phase_runs.append(phases * 1000)
        med_total = statistics.median(totals)
        med_phases = phase_runs[int(np.argsort(totals)[len(totals) // 2])]
        return {
            "decode_ms": float(med_phases[0]),
            "prep_ms": float(med_phases[1]),
            "forward_ms": float(med_phases[2]),
            "total_ms": med_total,
        }

    pixel = run(pixel_batch)
    dct = run(dct_batch)
    return PipelineReport(
        pixel=pixel,
        dct=dct,
        pixel_total_ms=pixel["total_ms"],
        dct_total_ms=dct["total_ms"],
        gain_pct=100.0 * (pixel["total_ms"] - dct["total_ms"]) / pixel["total_ms"],
        context=_context(len(streams), repetitions),
    )


def bench_storage(streams: list[bytes]) -> StorageReport:
    """Bytes on disk: decoded pixel buffers vs entropy-coded streams vs QDB
    containers (the materialized coefficient intermediate, honestly larger
    than 8-bit pixels)."""
    raw = jpeg = qdb = 0
    for s in streams:
        grid = partial_decode(s)
        raw += grid.orig_width * grid.orig_height
        jpeg += len(s)
        qdb += 143 + grid.blocks_h * grid.blocks_w * 128
    return StorageReport(
        raw_bytes=raw,
        jpeg_bytes=jpeg,
        qdb_bytes=qdb,
        jpeg_reduction_pct=100.0 * (raw - jpeg) / raw,
        qdb_reduction_pct=100.0 * (raw - qdb) / raw,
        context=_context(len(streams), 1),
    )
