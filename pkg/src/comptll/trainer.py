"""Loss, optimizer and the seeded training loop.

The loss mixes pixel BCE with a soft-overlap term:
``mix * bce + (1 - mix) * (1 - (2*sum(p*t)+1)/(sum(p)+sum(t)+1))``.
Log inputs are clamped at 1e-7 so the loss stays finite whatever the head
emits. The optimizer is plain Adam with bias correction.

Every source of randomness (shuffling, dropout) is derived from
(seed, epoch), so resuming at epoch k replays exactly what an unbroken run
would have done.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import seg_metrics, unet
from .autodiff import Tensor
from .coeff_input import assemble_plane
from .docgen import load_manifest
from .jpeg_codec import partial_decode
from .pgm import read_pgm

LOG_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 5
    learning_rate: float = 1e-3
    loss_mix: float = 0.5
    seed: int = 0
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.loss_mix <= 1.0:
            raise ValueError(f"loss_mix must be in [0, 1], got {self.loss_mix}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


def seg_loss(pred: Tensor, target: np.ndarray, mix: float = 0.5) -> Tensor:
    """BCE plus soft-overlap loss between a probability map and a 0/1 mask."""
    t = np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"pred {pred.shape} vs target {t.shape}")
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("target must be binary")
    tt = Tensor(t)
    p = ad.clip(pred, LOG_EPS, 1.0 - LOG_EPS)
    bce = -(tt * ad.log(p) + (1.0 - tt) * ad.log(1.0 - p)).mean()
    overlap = (2.0 * (pred * tt).sum() + 1.0) / (pred.sum() + tt.sum() + 1.0)
    return mix * bce + (1.0 - mix) * (1.0 - overlap)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )

    def to_records(self) -> dict[str, np.ndarray]:
        recs = {"adam.step": np.array([float(self.step)], dtype=np.float32)}
        recs.update({f"adam.m.{k}": v for k, v in self.m.items()})
        recs.update({f"adam.v.{k}": v for k, v in self.v.items()})
        return recs

    @classmethod
    def from_records(cls, recs: dict[str, np.ndarray]) -> "AdamState":
        state = cls(step=int(recs["adam.step"][0]))
        for key, arr in recs.items():
            if key.startswith("adam.m."):
                state.m[key[7:]] = arr.copy()
            elif key.startswith("adam.v."):
                state.v[key[7:]] = arr.copy()
        return state


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; clears gradients afterwards."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.isfinite(g).all():
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise FloatingPointError(
                f"non-finite gradient in {name!r} at step {t} "
                f"({bad}/{g.size} entries)")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)
        p.grad = None


# --------------------------------------------------------------------------
# dataset plumbing
# --------------------------------------------------------------------------

def load_dataset(data_dir: str | Path, side: int):
    """Read an exported dataset into (train, test) lists of (plane, mask).

    Planes come from the JPEG files through partial decoding only; masks
    are nearest-resized when the page size differs from the model side.
    """
    data_dir = Path(data_dir)
    train, test = [], []
    for row in load_manifest(data_dir):
        grid = partial_decode((data_dir / row["jpg"]).read_bytes())
        plane = assemble_plane(grid, side).values
        mask = (read_pgm(data_dir / row["mask"]) > 127).astype(np.uint8)
        if mask.shape != (side, side):
            mask = resize_nearest(mask, side, side)
        (test if row.get("split") == "test" else train).append((plane, mask))
    return train, test


def resize_nearest(img: np.ndarray, h: int, w: int) -> np.ndarray:
    ys = (np.arange(h) * img.shape[0]) // h
    xs = (np.arange(w) * img.shape[1]) // w
    return img[np.ix_(ys, xs)]


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

def validate(params: unet.UNetParams, dataset, batch_size: int = 5,
             threshold: float = 0.5, min_area: int = 64):
    """Post-processed micro-averaged dice and IoU over a held-out set."""
    tp = fp = fn = 0
    for i in range(0, len(dataset), batch_size):
        chunk = dataset[i : i + batch_size]
        batch = np.stack([p for p, _ in chunk])[:, None]
        probs = unet.forward(params, batch, "eval").data
        for j, (_, gt) in enumerate(chunk):
            pred = seg_metrics.post_process(probs[j, 0], threshold, min_area)
            c = seg_metrics.confusion(pred, gt)
            tp += c.tp
            fp += c.fp
            fn += c.fn
    dice = 2.0 * tp / (2.0 * tp + fp + fn) if tp + fp + fn else 1.0
    iou = tp / (tp + fp + fn) if tp + fp + fn else 1.0
    return dice, iou


def train(params: unet.UNetParams, train_set, val_set, config: TrainConfig,
          log_path: str | Path | None = None, start_epoch: int = 0,
          adam_state: AdamState | None = None,
          echo=None) -> list[dict]:
    """Optimize ``params`` in place; returns one metrics row per epoch.

    Writes JSON-lines rows (epoch, loss, dice, iou, wall_ms) to
    ``log_path``, keeps ``last.ckpt`` fresh and retains the best-dice epoch
    as ``best.ckpt`` under the configured checkpoint directory.
    """
    if not train_set:
        raise ValueError("training split is empty")
    trainable = params.trainable()
    state = adam_state if adam_state is not None else AdamState.for_params(trainable)
    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_fh = open(log_path, "a") if log_path else None

    best_dice = -1.0
    history = []
    try:
        for epoch in range(start_epoch, start_epoch + config.epochs):
            t0 = time.perf_counter()
            order = np.random.default_rng((config.seed, epoch)).permutation(
                len(train_set))
            drop_rng = np.random.default_rng((config.seed, epoch, 7))
            losses = []
            for lo in range(0, len(order), config.batch_size):
                sel = order[lo : lo + config.batch_size]
                batch = np.stack([train_set[i][0] for i in sel])[:, None]
                masks = np.stack([train_set[i][1] for i in sel])[:, None]
                out = unet.forward(params, batch, "train", rng=drop_rng)
                loss = seg_loss(out, masks.astype(np.float32), config.loss_mix)
                ad.backward(loss)
                adam_step(trainable, state, config.learning_rate)
                losses.append(loss.item())

            dice, iou = (validate(params, val_set, config.batch_size)
                         if val_set else (float("nan"), float("nan")))
            row = {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "dice": round(dice, 6),
                "iou": round(iou, 6),
                "wall_ms": int((time.perf_counter() - t0) * 1000),
            }
            history.append(row)
            if log_fh:
                log_fh.write(json.dumps(row) + "\n")
                log_fh.flush()
            if echo:
                echo(row)

            extra = state.to_records()
            extra["epoch"] = np.array([float(epoch + 1)], dtype=np.float32)
            unet.save_checkpoint(params, ckpt_dir / "last.ckpt", extra=extra)
            if val_set and dice > best_dice:
                best_dice = dice
                unet.save_checkpoint(params, ckpt_dir / "best.ckpt", extra=extra)
    finally:
        if log_fh:
            log_fh.close()
    return history
