"""Baseline sequential grayscale JPEG encoder/decoder.

The decoder has two entry points: :func:`partial_decode` stops right after
entropy decoding and returns the quantized coefficient grid (no
dequantization, no inverse DCT), while :func:`full_decode` runs the whole
chain back to pixels. The encoder emits single-component JFIF streams with
the standard luminance Huffman tables, so any third-party decoder can read
them.

Also hosts the QDB container, a flat serialization of a coefficient grid
(magic ``QDB1``; see :func:`write_qdb_file`).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dct_core import (
    BASE_LUMA_TABLE,
    QuantTable,
    ZIGZAG_INDEX,
    dequantize,
    idct,
    scale_quant_table,
    zigzag,
)


class JpegError(ValueError):
    """Malformed or unsupported JPEG data; carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncatedStreamError(JpegError):
    pass


class InvalidMarkerError(JpegError):
    pass


class HuffmanDecodeError(JpegError):
    pass


class QdbError(ValueError):
    """Malformed QDB coefficient container."""


@dataclass(frozen=True)
class HuffmanSpec:
    """Code-length counts plus symbol values, as stored in a DHT segment."""

    bits: tuple[int, ...]   # bits[i] = number of codes of length i+1
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != 16:
            raise ValueError("need 16 code-length counts")
        if sum(self.bits) != len(self.values):
            raise ValueError("length counts disagree with value list")
        # Kraft sum <= 1 guarantees the canonical assignment is prefix-free.
        kraft = sum(n * 2 ** -(i + 1) for i, n in enumerate(self.bits))
        if kraft > 1:
            raise ValueError(f"code lengths violate the Kraft inequality ({kraft})")


# Standard luminance tables (DC categories 0..11, AC run/size symbols).
STD_DC_SPEC = HuffmanSpec(
    bits=(0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0),
    values=tuple(range(12)),
)
STD_AC_SPEC = HuffmanSpec(
    bits=(0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D),
    values=(
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41,
        0x06, 0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91,
        0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24,
        0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A,
        0x25, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38,
        0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53,
        0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66,
        0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
        0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92, 0x93,
        0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
        0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7,
        0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
        0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1,
        0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2,
        0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ),
)


@dataclass
class QuantizedBlockGrid:
    """Entropy-decoded coefficient blocks in natural frequency order.

    ``blocks`` has shape (blocks_h, blocks_w, 8, 8); entries are the signed
    quantized DCT levels exactly as the entropy coder saw them.
    """

    blocks: np.ndarray
    table: QuantTable
    orig_width: int
    orig_height: int

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=np.int32)
        bh = -(-self.orig_height // 8)
        bw = -(-self.orig_width // 8)
        if self.blocks.shape != (bh, bw, 8, 8):
            raise ValueError(
                f"blocks shape {self.blocks.shape} does not cover "
                f"{self.orig_width}x{self.orig_height} pixels"
            )
        if self.blocks.min(initial=0) < -2048 or self.blocks.max(initial=0) > 2047:
            raise ValueError("coefficient outside the 12-bit signed range")

    @property
    def blocks_h(self) -> int:
        return self.blocks.shape[0]

    @property
    def blocks_w(self) -> int:
        return self.blocks.shape[1]


def same_grid(a: QuantizedBlockGrid, b: QuantizedBlockGrid) -> bool:
    """Coefficient-level equality (dims, table divisors, every block)."""
    return (
        a.orig_width == b.orig_width
        and a.orig_height == b.orig_height
        and np.array_equal(a.table.q, b.table.q)
        and np.array_equal(a.blocks, b.blocks)
    )


# --------------------------------------------------------------------------
# Huffman code construction
# --------------------------------------------------------------------------

def _canonical_codes(spec: HuffmanSpec) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length) under the canonical assignment."""
    codes = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(spec.bits[length - 1]):
            codes[spec.values[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


@lru_cache(maxsize=16)
def _decode_lut(bits: tuple, values: tuple) -> list[int]:
    """Flat 16-bit-peek decode table: entry = (symbol << 8) | code length.

    Zero marks bit patterns that are not a prefix of any code; one list
    index replaces the bit-by-bit tree walk in the hot decode loop.
    """
    lut = [0] * 65536
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            lo = code << (16 - length)
            hi = lo + (1 << (16 - length))
            lut[lo:hi] = [(values[k] << 8) | length] * (hi - lo)
            code += 1
            k += 1
        code <<= 1
    return lut


def _magnitude_category(v: int) -> int:
    return abs(v).bit_length()


# --------------------------------------------------------------------------
# Encoder
# --------------------------------------------------------------------------

class _BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def put(self, code: int, length: int) -> None:
        self.acc = (self.acc << length) | code
        self.nbits += length
        while self.nbits >= 8:
            byte = (self.acc >> (self.nbits - 8)) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:        # byte stuffing
                self.out.append(0x00)
            self.nbits -= 8
        self.acc &= (1 << self.nbits) - 1

    def flush(self) -> None:
        # pad the final byte with 1-bits, per the standard
        if self.nbits:
            pad = 8 - self.nbits
            self.put((1 << pad) - 1, pad)


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def encode(image: np.ndarray, quality: int = 50) -> bytes:
    """Compress a grayscale image (H, W uint8) into a baseline JFIF stream.

    Edge blocks are padded by replicating the last row/column so partial
    blocks do not ring.
    """
    img = np.asarray(image)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be 2-d and non-empty, got shape {img.shape}")
    table = scale_quant_table(BASE_LUMA_TABLE, quality)
    h, w = img.shape
    ph, pw = -(-h // 8) * 8, -(-w // 8) * 8
    padded = np.pad(img.astype(np.float64), ((0, ph - h), (0, pw - w)), mode="edge")

    # batched FDCT: level shift, then the same cosine products fdct() uses
    blocks = padded.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3) - 128.0
    from .dct_core import _DCT_MAT  # shared basis keeps encoder and oracle aligned

    coeffs = np.einsum("ui,yxij,vj->yxuv", _DCT_MAT, blocks, _DCT_MAT, optimize=True)
    ratio = coeffs / table.q
    levels = (np.sign(ratio) * np.floor(np.abs(ratio) + 0.5)).astype(np.int32)

    grid = QuantizedBlockGrid(levels, table, orig_width=w, orig_height=h)
    return encode_grid(grid)


def encode_grid(grid: QuantizedBlockGrid) -> bytes:
    """Entropy-encode an existing coefficient grid into a JFIF stream.

    This is the second half of :func:`encode`; tests use it to drive the
    entropy coder with grids the transform stage never produces.
    """
    dc_codes = _canonical_codes(STD_DC_SPEC)
    ac_codes = _canonical_codes(STD_AC_SPEC)

    out = bytearray()
    out += b"\xFF\xD8"  # SOI
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    out += _segment(0xDB, b"\x00" + bytes(int(v) for v in zigzag(grid.table.q)))
    out += _segment(
        0xC0,
        struct.pack(">BHHB", 8, grid.orig_height, grid.orig_width, 1)
        + bytes((1, 0x11, 0)),
    )
    out += _segment(
        0xC4, b"\x00" + bytes(STD_DC_SPEC.bits) + bytes(STD_DC_SPEC.values)
    )
    out += _segment(
        0xC4, b"\x10" + bytes(STD_AC_SPEC.bits) + bytes(STD_AC_SPEC.values)
    )
    out += _segment(0xDA, bytes((1, 1, 0x00, 0, 63, 0)))

    writer = _BitWriter()
    pred = 0
    flat = grid.blocks.reshape(-1, 64)
    zz = ZIGZAG_INDEX
    for row in flat:
        seq = row[zz]
        diff = int(seq[0]) - pred
        pred = int(seq[0])
        ssss = _magnitude_category(diff)
        if ssss > 11:
            raise ValueError(f"DC difference {diff} exceeds baseline coding range")
        code, length = dc_codes[ssss]
        writer.put(code, length)
        if ssss:
            writer.put(diff if diff > 0 else diff + (1 << ssss) - 1, ssss)

        run = 0
        last_nonzero = int(np.max(np.nonzero(seq)[0])) if np.any(seq) else 0
        for k in range(1, last_nonzero + 1):
            v = int(seq[k])
            if v == 0:
                run += 1
                continue
            while run >= 16:
                code, length = ac_codes[0xF0]  # ZRL
                writer.put(code, length)
                run -= 16
            ssss = _magnitude_category(v)
            if ssss > 10:
                raise ValueError(f"AC coefficient {v} exceeds baseline coding range")
            code, length = ac_codes[(run << 4) | ssss]
            writer.put(code, length)
            writer.put(v if v > 0 else v + (1 << ssss) - 1, ssss)
            run = 0
        if last_nonzero < 63:
            code, length = ac_codes[0x00]  # EOB
            writer.put(code, length)
    writer.flush()

    out += writer.out
    out += b"\xFF\xD9"  # EOI
    return bytes(out)


# --------------------------------------------------------------------------
# Decoder
# --------------------------------------------------------------------------

_RST_CODES = frozenset(range(0xD0, 0xD8))


def _split_entropy(buf: bytes, start: int) -> tuple[list[bytes], int]:
    """Collect entropy-coded chunks from ``start``; chunks are separated by
    restart markers and already unstuffed. Returns (chunks, offset of the
    marker that ended the scan)."""
    chunks = []
    begin = i = start
    n = len(buf)
    while True:
        j = buf.find(b"\xFF", i)
        if j < 0 or j + 1 >= n:
            raise TruncatedStreamError("entropy data ends without a marker", n)
        nxt = buf[j + 1]
        if nxt == 0x00:          # stuffed data byte
            i = j + 2
            continue
        if nxt in _RST_CODES:    # restart: close the chunk, resync after it
            chunks.append(buf[begin:j].replace(b"\xFF\x00", b"\xFF"))
            begin = i = j + 2
            continue
        chunks.append(buf[begin:j].replace(b"\xFF\x00", b"\xFF"))
        return chunks, j


def _decode_chunk(
    chunk: bytes,
    out: np.ndarray,
    first_block: int,
    max_blocks: int,
    dc_lut: list[int],
    ac_lut: list[int],
    chunk_offset: int,
) -> int:
    """Entropy-decode up to ``max_blocks`` blocks from one chunk into
    ``out`` (N, 64 zigzag-order rows starting at ``first_block``).
    Returns the number of blocks decoded."""
    acc = 0
    nbits = 0
    pos = 0
    used = 0
    total = 8 * len(chunk)
    pred = 0
    b = first_block
    end = min(first_block + max_blocks, out.shape[0])
    while b < end:
        if used >= total and b > first_block:
            break  # chunk exhausted on a block boundary
        acc &= (1 << nbits) - 1
        row = out[b]

        while nbits < 16:
            acc = (acc << 8) | (chunk[pos] if pos < len(chunk) else 0)
            pos += pos < len(chunk)
            nbits += 8
        entry = dc_lut[(acc >> (nbits - 16)) & 0xFFFF]
        if entry == 0:
            raise HuffmanDecodeError("no DC code matches bitstream", chunk_offset + pos)
        ssss = entry >> 8
        nbits -= entry & 0xFF
        used += entry & 0xFF
        if ssss:
            while nbits < ssss:
                acc = (acc << 8) | (chunk[pos] if pos < len(chunk) else 0)
                pos += pos < len(chunk)
                nbits += 8
            bits = (acc >> (nbits - ssss)) & ((1 << ssss) - 1)
            nbits -= ssss
            used += ssss
            pred += bits if bits >= (1 << (ssss - 1)) else bits - (1 << ssss) + 1
        row[0] = pred

        k = 1
        while k < 64:
            while nbits < 16:
                acc = (acc << 8) | (chunk[pos] if pos < len(chunk) else 0)
                pos += pos < len(chunk)
                nbits += 8
            entry = ac_lut[(acc >> (nbits - 16)) & 0xFFFF]
            if entry == 0:
                raise HuffmanDecodeError(
                    "no AC code matches bitstream", chunk_offset + pos
                )
            rs = entry >> 8
            nbits -= entry & 0xFF
            used += entry & 0xFF
            s = rs & 0x0F
            if s == 0:
                if rs == 0xF0:   # ZRL: sixteen zeros
                    k += 16
                    continue
                break            # EOB
            k += rs >> 4
            if k > 63:
                raise HuffmanDecodeError(
                    "AC run-length spills past the block", chunk_offset + pos
                )
            while nbits < s:
                acc = (acc << 8) | (chunk[pos] if pos < len(chunk) else 0)
                pos += pos < len(chunk)
                nbits += 8
            bits = (acc >> (nbits - s)) & ((1 << s) - 1)
            nbits -= s
            used += s
            row[k] = bits if bits >= (1 << (s - 1)) else bits - (1 << s) + 1
            k += 1
        if used > total:
            raise TruncatedStreamError(
                "entropy data ran out mid-block", chunk_offset + len(chunk)
            )
        b += 1
    return b - first_block


def _infer_quality(q: np.ndarray) -> int:
    """Smallest quality whose scaling of the default base table matches, or
    0 when the table did not come from that scaling (quality unknowable)."""
    for quality in range(1, 101):
        if np.array_equal(scale_quant_table(BASE_LUMA_TABLE, quality).q, q):
            return quality
    return 0


def partial_decode(stream: bytes) -> QuantizedBlockGrid:
    """Entropy-decode a baseline grayscale stream; stop before any
    dequantization or inverse transform.

    Performs Huffman decoding, DC prediction unwinding, run-length
    expansion and zigzag inversion, exactly recovering the quantized
    levels the encoder produced.
    """
    buf = bytes(stream)
    if len(buf) < 4 or buf[0:2] != b"\xFF\xD8":
        raise InvalidMarkerError("stream does not start with SOI", 0)

    quant_tables: dict[int, np.ndarray] = {}
    huffman: dict[tuple[int, int], HuffmanSpec] = {}
    width = height = None
    component_tq = 0
    restart_interval = 0
    pos = 2

    while True:
        if pos + 2 > len(buf):
            raise TruncatedStreamError("ran out of data before EOI", pos)
        if buf[pos] != 0xFF:
            raise InvalidMarkerError(f"expected a marker, found 0x{buf[pos]:02X}", pos)
        while buf[pos + 1] == 0xFF:      # optional fill bytes
            pos += 1
            if pos + 2 > len(buf):
                raise TruncatedStreamError("fill bytes run off the stream", pos)
        marker = buf[pos + 1]
        marker_at = pos
        pos += 2

        if marker == 0xD9:  # EOI
            raise InvalidMarkerError("EOI reached before any scan data", marker_at)
        if marker in (0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB):
            raise InvalidMarkerError(
                f"unsupported encoding mode (SOF marker 0x{marker:02X})", marker_at
            )
        if marker == 0x01 or marker in _RST_CODES:
            continue  # TEM / stray restart carry no payload

        if pos + 2 > len(buf):
            raise TruncatedStreamError("marker segment length missing", pos)
        seg_len = struct.unpack(">H", buf[pos : pos + 2])[0]
        if seg_len < 2:
            raise InvalidMarkerError(f"segment length {seg_len} too small", pos)
        data = buf[pos + 2 : pos + seg_len]
        if len(data) != seg_len - 2:
            raise TruncatedStreamError("marker segment truncated", pos)
        seg_start = pos
        pos += seg_len

        if marker == 0xDB:  # DQT, possibly several tables per segment
            i = 0
            while i < len(data):
                pq, tq = data[i] >> 4, data[i] & 0x0F
                if pq != 0:
                    raise InvalidMarkerError(
                        "16-bit quantization tables are not baseline", seg_start + i
                    )
                if i + 65 > len(data):
                    raise TruncatedStreamError("DQT table truncated", seg_start + i)
                zz = np.frombuffer(data[i + 1 : i + 65], dtype=np.uint8)
                natural = np.zeros(64, dtype=np.int32)
                natural[ZIGZAG_INDEX] = zz
                quant_tables[tq] = natural.reshape(8, 8)
                i += 65
        elif marker == 0xC0:  # SOF0
            precision, height, width, ncomp = struct.unpack(">BHHB", data[:6])
            if precision != 8:
                raise InvalidMarkerError(
                    f"{precision}-bit precision not supported", seg_start
                )
            if ncomp != 1:
                raise InvalidMarkerError(
                    f"only single-component streams supported, got {ncomp}",
                    seg_start,
                )
            if width == 0 or height == 0:
                raise InvalidMarkerError("zero image dimension", seg_start)
            component_tq = data[8]
        elif marker == 0xC4:  # DHT, possibly several tables per segment
            i = 0
            while i < len(data):
                tc, th = data[i] >> 4, data[i] & 0x0F
                bits = tuple(data[i + 1 : i + 17])
                if len(bits) != 16:
                    raise TruncatedStreamError("DHT header truncated", seg_start + i)
                count = sum(bits)
                values = tuple(data[i + 17 : i + 17 + count])
                if len(values) != count:
                    raise TruncatedStreamError("DHT values truncated", seg_start + i)
                try:
                    huffman[(tc, th)] = HuffmanSpec(bits, values)
                except ValueError as exc:
                    raise HuffmanDecodeError(str(exc), seg_start + i) from exc
                i += 17 + count
        elif marker == 0xDD:  # DRI
            restart_interval = struct.unpack(">H", data[:2])[0]
        elif marker == 0xDA:  # SOS: entropy data follows
            if width is None:
                raise InvalidMarkerError("SOS before SOF0", marker_at)
            ncomp = data[0]
            if ncomp != 1:
                raise InvalidMarkerError(
                    "interleaved multi-component scans not supported", seg_start
                )
            td, ta = data[2] >> 4, data[2] & 0x0F
            ss, se = data[3], data[4]
            if (ss, se) != (0, 63):
                raise InvalidMarkerError("non-baseline spectral selection", seg_start)
            if (0, td) not in huffman or (1, ta) not in huffman:
                raise HuffmanDecodeError(
                    f"scan references undefined Huffman tables (DC {td}, AC {ta})",
                    seg_start,
                )
            if component_tq not in quant_tables:
                raise InvalidMarkerError(
                    f"scan references undefined quantization table {component_tq}",
                    seg_start,
                )
            break
        # all other markers (APPn, COM, ...) are skipped

    bh, bw = -(-height // 8), -(-width // 8)
    nblocks = bh * bw
    dc_spec = huffman[(0, td)]
    ac_spec = huffman[(1, ta)]
    dc_lut = _decode_lut(dc_spec.bits, dc_spec.values)
    ac_lut = _decode_lut(ac_spec.bits, ac_spec.values)

    chunks, end_pos = _split_entropy(buf, pos)
    zig = np.zeros((nblocks, 64), dtype=np.int32)
    done = 0
    per_chunk = restart_interval if restart_interval else nblocks
    for ci, chunk in enumerate(chunks):
        if done >= nblocks:
            break
        done += _decode_chunk(
            chunk, zig, done, per_chunk, dc_lut, ac_lut, pos
        )
    if done < nblocks:
        raise TruncatedStreamError(
            f"scan held {done} of {nblocks} blocks", end_pos
        )

    if buf[end_pos : end_pos + 2] != b"\xFF\xD9":
        while end_pos + 1 < len(buf) and buf[end_pos + 1] == 0xFF:
            end_pos += 1
        if buf[end_pos : end_pos + 2] != b"\xFF\xD9":
            raise InvalidMarkerError("scan is not closed by EOI", end_pos)

    natural = zig[:, np.argsort(ZIGZAG_INDEX)]  # undo the scan order
    blocks = natural.reshape(bh, bw, 8, 8)
    table = QuantTable(
        quant_tables[component_tq], _infer_quality(quant_tables[component_tq])
    )
    return QuantizedBlockGrid(blocks, table, orig_width=width, orig_height=height)


def full_decode(stream: bytes) -> np.ndarray:
    """Decode all the way to pixels: entropy decode, dequantize each block,
    inverse-transform it, then assemble and crop to the original size."""
    grid = partial_decode(stream)
    bh, bw = grid.blocks_h, grid.blocks_w
    img = np.empty((bh * 8, bw * 8), dtype=np.uint8)
    for by in range(bh):
        for bx in range(bw):
            coeffs = dequantize(grid.blocks[by, bx], grid.table)
            img[by * 8 : by * 8 + 8, bx * 8 : bx * 8 + 8] = idct(coeffs)
    return img[: grid.orig_height, : grid.orig_width].copy()


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two 8-bit images."""
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


# --------------------------------------------------------------------------
# QDB container
# --------------------------------------------------------------------------

_QDB_MAGIC = b"QDB1"
_QDB_VERSION = 1


def write_qdb_file(grid: QuantizedBlockGrid, path: str | Path) -> None:
    """Serialize a grid: magic, version, dims, quality, table, then each
    block as 64 little-endian i16 values in natural frequency order."""
    header = _QDB_MAGIC + struct.pack(
        "<BIIH", _QDB_VERSION, grid.orig_width, grid.orig_height, grid.table.quality
    )
    table = grid.table.q.astype("<u2").tobytes()
    body = grid.blocks.astype("<i2").tobytes()
    Path(path).write_bytes(header + table + body)


def read_qdb_file(path: str | Path) -> QuantizedBlockGrid:
    data = Path(path).read_bytes()
    if data[:4] != _QDB_MAGIC:
        raise QdbError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 143:
        raise QdbError(f"{path}: header truncated ({len(data)} bytes)")
    version, width, height, quality = struct.unpack("<BIIH", data[4:15])
    if version != _QDB_VERSION:
        raise QdbError(f"{path}: unsupported version {version}")
    q = np.frombuffer(data[15:143], dtype="<u2").astype(np.int32).reshape(8, 8)
    bh, bw = -(-height // 8), -(-width // 8)
    expected = 143 + bh * bw * 128
    if len(data) != expected:
        raise QdbError(
            f"{path}: size mismatch, expected {expected} bytes for "
            f"{width}x{height}, found {len(data)}"
        )
    blocks = (
        np.frombuffer(data[143:], dtype="<i2").astype(np.int32).reshape(bh, bw, 8, 8)
    )
    return QuantizedBlockGrid(
        blocks, QuantTable(q, quality), orig_width=width, orig_height=height
    )
