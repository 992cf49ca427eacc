"""Encoder-decoder segmentation network over coefficient planes.

Four encoder stages of two (conv -> batch norm -> spatial dropout -> ReLU)
blocks each, doubling channels and halving resolution; a two-conv
bottleneck; four decoder stages of transpose-conv upsampling, skip
concatenation and two conv blocks; a 1x1 sigmoid head. The first conv uses
a 7x7 kernel to take in a whole coefficient block plus its neighbors, all
other convs are 3x3, stride 1, same padding. At the default depth that is
19 convolutions and 4 transpose convolutions.

``width_mult`` scales every channel count so the same architecture runs at
desk scale; shapes and layer counts do not change.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .coeff_input import CoeffPlane


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class UNetConfig:
    input_side: int = 512
    base_channels: int = 64
    depth: int = 4
    pool_mode: str = "average"
    dropout_rate: float = 0.1
    width_mult: float = 1.0
    first_kernel: int = 7

    def __post_init__(self):
        if self.input_side % (1 << self.depth) != 0:
            raise ValueError(
                f"input side {self.input_side} not divisible by 2^{self.depth}")
        if self.pool_mode not in ("average", "max"):
            raise ValueError(f"pool_mode must be average or max, got {self.pool_mode}")
        if self.base_channels * self.width_mult < 1:
            raise ValueError("width_mult leaves no channels at the first stage")
        if self.first_kernel % 2 == 0:
            raise ValueError("first kernel must be odd")

    def scaled(self, channels: int) -> int:
        return max(1, int(round(channels * self.width_mult)))

    def stage_channels(self) -> list[int]:
        """Channel counts per encoder stage plus the bottleneck."""
        return [self.scaled(self.base_channels << i) for i in range(self.depth + 1)]


@dataclass
class UNetParams:
    config: UNetConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)
    bn_state: dict[str, BatchNormState] = field(default_factory=dict)

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.tensors.items() if v.requires_grad}

    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def conv_names(self) -> list[str]:
        return [k[:-2] for k in self.tensors if k.endswith(".w")
                and not k.startswith("up:")]

    def transpose_names(self) -> list[str]:
        return [k[3:-2] for k in self.tensors if k.startswith("up:")
                and k.endswith(".w")]


def _he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def build(config: UNetConfig, seed: int = 0) -> UNetParams:
    """Allocate and He-uniform-initialize all parameters from a seed."""
    rng = np.random.default_rng(seed)
    params = UNetParams(config)

    def add_conv(name: str, cin: int, cout: int, k: int):
        params.tensors[f"{name}.w"] = Tensor(
            _he_uniform(rng, (cout, cin, k, k), cin * k * k), requires_grad=True)
        params.tensors[f"{name}.b"] = Tensor(
            np.zeros(cout, dtype=np.float32), requires_grad=True)

    def add_bn(name: str, c: int):
        params.tensors[f"{name}.gamma"] = Tensor(
            np.ones(c, dtype=np.float32), requires_grad=True)
        params.tensors[f"{name}.beta"] = Tensor(
            np.zeros(c, dtype=np.float32), requires_grad=True)
        params.bn_state[name] = BatchNormState.initial(c)

    def add_block(name: str, cin: int, cout: int, k: int = 3):
        add_conv(f"{name}", cin, cout, k)
        add_bn(f"{name}.bn", cout)

    chans = config.stage_channels()
    cin = 1
    for i in range(config.depth):
        c = chans[i]
        k1 = config.first_kernel if i == 0 else 3
        add_block(f"enc{i + 1}.conv1", cin, c, k1)
        add_block(f"enc{i + 1}.conv2", c, c)
        cin = c
    add_block("bott.conv1", cin, chans[-1])
    add_block("bott.conv2", chans[-1], chans[-1])

    cin = chans[-1]
    for i in reversed(range(config.depth)):
        c = chans[i]
        # transpose conv halves the channel count while doubling resolution
        params.tensors[f"up:dec{i + 1}.up.w"] = Tensor(
            _he_uniform(rng, (cin, c, 2, 2), cin * 4), requires_grad=True)
        params.tensors[f"up:dec{i + 1}.up.b"] = Tensor(
            np.zeros(c, dtype=np.float32), requires_grad=True)
        add_block(f"dec{i + 1}.conv1", c * 2, c)  # concat with the skip
        add_block(f"dec{i + 1}.conv2", c, c)
        cin = c
    add_conv("head", chans[0], 1, 1)
    # start the head near the typical foreground rate instead of 0.5;
    # saves the first epochs from fighting the class imbalance
    params.tensors["head.b"].data[:] = -2.0
    return params


def forward(params: UNetParams, plane, mode: str = "eval",
            rng: np.random.Generator | None = None) -> Tensor:
    """Probability map for one plane or a batch.

    ``plane`` is a CoeffPlane, an (S, S) array, or an (N, 1, S, S) batch.
    Train mode updates batch-norm running stats and applies spatial
    dropout (from ``rng``); eval mode is deterministic and records no
    gradient graph.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode}")
    training = mode == "train"

    if isinstance(plane, CoeffPlane):
        x = plane.values[None, None]
    else:
        x = np.asarray(plane)
        if x.dtype not in (np.float32, np.float64):
            x = x.astype(np.float32)
        if x.ndim == 2:
            x = x[None, None]
    side = params.config.input_side
    if x.shape[2] != side or x.shape[3] != side:
        raise ValueError(
            f"plane side {x.shape[2]}x{x.shape[3]} does not match "
            f"configured {side}")

    if training:
        return _forward_graph(params, Tensor(x), training, rng)
    with ad.no_grad():
        return _forward_graph(params, Tensor(x), training, rng)


def _forward_graph(params: UNetParams, x: Tensor, training: bool,
                   rng) -> Tensor:
    cfg = params.config
    t = params.tensors

    def block(name: str, h: Tensor, k: int) -> Tensor:
        h = ad.conv2d(h, t[f"{name}.w"], t[f"{name}.b"], padding=k // 2)
        h = ad.batch_norm(h, t[f"{name}.bn.gamma"], t[f"{name}.bn.beta"],
                          params.bn_state[f"{name}.bn"], training)
        h = ad.spatial_dropout(h, cfg.dropout_rate, rng, training)
        return ad.relu(h)

    pool = ad.avg_pool2 if cfg.pool_mode == "average" else ad.max_pool2

    h = x
    skips = []
    for i in range(cfg.depth):
        k1 = cfg.first_kernel if i == 0 else 3
        h = block(f"enc{i + 1}.conv1", h, k1)
        h = block(f"enc{i + 1}.conv2", h, 3)
        skips.append(h)
        h = pool(h)
    h = block("bott.conv1", h, 3)
    h = block("bott.conv2", h, 3)
    for i in reversed(range(cfg.depth)):
        h = ad.conv_transpose2d(h, t[f"up:dec{i + 1}.up.w"],
                                t[f"up:dec{i + 1}.up.b"], stride=2)
        h = ad.concat(h, skips[i], axis=1)
        h = block(f"dec{i + 1}.conv1", h, 3)
        h = block(f"dec{i + 1}.conv2", h, 3)
    h = ad.conv2d(h, t["head.w"], t["head.b"])
    return ad.sigmoid(h)


# --------------------------------------------------------------------------
# checkpoint I/O
# --------------------------------------------------------------------------

_MAGIC = b"CTLU"
_VERSION = 1
_POOL_CODES = {"average": 0, "max": 1}
_POOL_NAMES = {v: k for k, v in _POOL_CODES.items()}


def save_checkpoint(params: UNetParams, path: str | Path,
                    extra: dict[str, np.ndarray] | None = None) -> None:
    """Write config and every named array; ``extra`` records (optimizer
    moments, counters) ride along under their own names."""
    cfg = params.config
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<B", _VERSION)
    out += struct.pack(
        "<IIIBffI", cfg.input_side, cfg.base_channels, cfg.depth,
        _POOL_CODES[cfg.pool_mode], cfg.dropout_rate, cfg.width_mult,
        cfg.first_kernel)

    records: dict[str, np.ndarray] = {k: v.data for k, v in params.tensors.items()}
    for name, st in params.bn_state.items():
        records[f"{name}.running_mean"] = st.mean
        records[f"{name}.running_var"] = st.var
    if extra:
        records.update({f"extra:{k}": np.asarray(v) for k, v in extra.items()})

    out += struct.pack("<I", len(records))
    for name, arr in records.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path) -> tuple[UNetParams, dict[str, np.ndarray]]:
    """Rebuild params from a checkpoint, validating shapes against the
    stored config. Returns (params, extra records)."""
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 30:
        raise CheckpointError(f"{path}: header truncated")
    (version,) = struct.unpack("<B", data[4:5])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    side, base, depth, pool, rate, wm, fk = struct.unpack("<IIIBffI", data[5:30])
    if pool not in _POOL_NAMES:
        raise CheckpointError(f"{path}: unknown pool mode code {pool}")
    config = UNetConfig(side, base, depth, _POOL_NAMES[pool],
                        round(float(rate), 6), round(float(wm), 6), fk)

    pos = 30
    try:
        (count,) = struct.unpack("<I", data[pos : pos + 4])
        pos += 4
        records: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", data[pos : pos + 2])
            pos += 2
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack("<B", data[pos : pos + 1])
            pos += 1
            shape = struct.unpack(f"<{ndim}I", data[pos : pos + 4 * ndim])
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            raw = data[pos : pos + 4 * n]
            if len(raw) != 4 * n:
                raise CheckpointError(f"{path}: record {name!r} truncated")
            records[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            pos += 4 * n
    except struct.error as exc:
        raise CheckpointError(f"{path}: corrupt record table ({exc})") from exc
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")

    params = build(config, seed=0)
    for key, tensor in params.tensors.items():
        if key not in records:
            raise CheckpointError(f"{path}: missing parameter {key!r}")
        arr = records.pop(key)
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {key!r}: stored {arr.shape}, "
                f"config implies {tensor.data.shape}")
        tensor.data = arr
    for name, st in params.bn_state.items():
        for suffix, target in (("running_mean", "mean"), ("running_var", "var")):
            key = f"{name}.{suffix}"
            if key not in records:
                raise CheckpointError(f"{path}: missing state {key!r}")
            arr = records.pop(key)
            if arr.shape != getattr(st, target).shape:
                raise CheckpointError(f"{path}: shape mismatch for {key!r}")
            setattr(st, target, arr)

    extra = {k[len("extra:"):]: v for k, v in records.items()
             if k.startswith("extra:")}
    return params, extra
