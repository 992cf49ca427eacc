"""Command-line front end for the whole pipeline.

Exit codes: 0 success, 1 domain error (bad stream, bad mask, diverged
training), 2 usage or I/O error. ``COMPTLL_SEED`` overrides ``--seed``
wherever a seed is taken.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import docgen, jpeg_codec, seg_metrics, trainer, unet
from .coeff_input import VALID_SIDES, assemble_plane
from .pgm import read_pgm, write_pgm

SCHEMA_VERSION = 1


def _seed_from_env(seed: int) -> int:
    env = os.environ.get("COMPTLL_SEED")
    return int(env) if env else seed


def cmd_encode(args) -> int:
    img = read_pgm(args.input)
    Path(args.output).write_bytes(jpeg_codec.encode(img, args.quality))
    return 0


def cmd_decode(args) -> int:
    stream = Path(args.input).read_bytes()
    write_pgm(args.output, jpeg_codec.full_decode(stream))
    return 0


def cmd_extract_coeffs(args) -> int:
    stream = Path(args.input).read_bytes()
    jpeg_codec.write_qdb_file(jpeg_codec.partial_decode(stream), args.output)
    return 0


def cmd_gen_data(args) -> int:
    seed = _seed_from_env(args.seed)
    spec = docgen.DocSpec(seed=seed, side=args.side)
    docs = docgen.generate(spec, args.count)
    rows = docgen.export_dataset(docs, args.out, quality=args.quality)
    print(f"wrote {len(rows)} documents to {args.out}")
    return 0


def cmd_train(args) -> int:
    seed = _seed_from_env(args.seed)
    data_dir = Path(args.data)
    manifest = docgen.load_manifest(data_dir)
    if not manifest:
        raise ValueError(f"empty manifest under {data_dir}")

    side = args.side
    if side is None:
        first = jpeg_codec.partial_decode(
            (data_dir / manifest[0]["jpg"]).read_bytes())
        native = max(first.blocks_h, first.blocks_w) * 8
        side = min((s for s in VALID_SIDES if s >= native), default=VALID_SIDES[-1])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    start_epoch = 0
    adam_state = None
    if args.resume:
        params, extra = unet.load_checkpoint(out_dir / "last.ckpt")
        start_epoch = int(extra["epoch"][0])
        adam_state = trainer.AdamState.from_records(extra)
        print(f"resuming from epoch {start_epoch}")
    else:
        config = unet.UNetConfig(input_side=side, width_mult=args.width_mult)
        params = unet.build(config, seed=seed)

    print(f"train: epochs={args.epochs} batch={args.batch} lr={args.lr} "
          f"side={params.config.input_side} width_mult={params.config.width_mult} "
          f"seed={seed}")
    train_set, test_set = trainer.load_dataset(data_dir, params.config.input_side)
    if not train_set:
        raise ValueError("training split is empty")
    tconf = trainer.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
        seed=seed, checkpoint_dir=str(out_dir))
    trainer.train(
        params, train_set, test_set, tconf,
        log_path=out_dir / "train_log.jsonl",
        start_epoch=start_epoch, adam_state=adam_state,
        echo=lambda row: print(json.dumps(row)))
    return 0


def cmd_predict(args) -> int:
    params, _ = unet.load_checkpoint(args.model)
    stream = Path(args.input).read_bytes()
    grid = jpeg_codec.partial_decode(stream)
    plane = assemble_plane(grid, params.config.input_side)
    prob = unet.forward(params, plane, "eval").data[0, 0]
    mask = seg_metrics.post_process(prob, args.threshold, args.min_area)
    mask = trainer.resize_nearest(mask, grid.orig_height, grid.orig_width)
    write_pgm(args.output, mask * 255)
    return 0


def cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    names = sorted(p.name for p in pred_dir.glob("*.pgm"))
    if not names:
        raise FileNotFoundError(f"no .pgm masks under {pred_dir}")
    per_image = {}
    total = np.zeros(3, dtype=np.int64)  # tp, fp, fn
    failures = 0
    for name in names:
        gt_path = gt_dir / name
        if not gt_path.exists():
            per_image[name] = {"error": f"no ground truth {gt_path}"}
            failures += 1
            continue
        pred = (read_pgm(pred_dir / name) > 127).astype(np.uint8)
        gt = (read_pgm(gt_path) > 127).astype(np.uint8)
        try:
            c = seg_metrics.confusion(pred, gt)
        except ValueError as exc:
            per_image[name] = {"error": str(exc)}
            failures += 1
            continue
        per_image[name] = seg_metrics.report(c).as_dict()
        total += (c.tp, c.fp, c.fn)
    tp, fp, fn = (int(v) for v in total)
    tn_dummy = 0
    aggregate = seg_metrics.report(
        seg_metrics.ConfusionCounts(tp, fp, fn, tn_dummy)).as_dict()
    doc = {
        "schema": SCHEMA_VERSION,
        "images": per_image,
        "aggregate": aggregate,
        "errors": failures,
    }
    Path(args.report).write_text(json.dumps(doc, indent=2))
    print(f"evaluated {len(names)} masks, {failures} errors -> {args.report}")
    return 1 if failures else 0


def cmd_bench(args) -> int:
    image_dir = Path(args.images)
    streams = [p.read_bytes() for p in sorted(image_dir.glob("*.jpg"))]
    if not streams:
        raise FileNotFoundError(f"no .jpg files under {image_dir}")
    doc = {"schema": SCHEMA_VERSION}
    doc["decode"] = bench_mod.bench_decode(streams).as_dict()
    doc["storage"] = bench_mod.bench_storage(streams).as_dict()
    if args.model:
        params, _ = unet.load_checkpoint(args.model)
        doc["pipeline"] = bench_mod.bench_pipeline(streams, params).as_dict()
    Path(args.report).write_text(json.dumps(doc, indent=2))
    print(f"decode reduction {doc['decode']['reduction_pct']:.1f}%  "
          f"jpeg storage reduction {doc['storage']['jpeg_reduction_pct']:.1f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comptll",
        description="Text-line localization on JPEG documents without full "
                    "decompression.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="PGM to baseline grayscale JPEG")
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="JPEG to PGM (full decompression)")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("extract-coeffs",
                       help="JPEG to QDB coefficient container (no IDCT)")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_extract_coeffs)

    p = sub.add_parser("gen-data", help="generate a labeled synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=int, default=512)
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit the model on an exported dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--width-mult", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--side", type=int, default=None, choices=VALID_SIDES,
                   help="model input side (default: inferred from the data)")
    p.add_argument("--resume", action="store_true",
                   help="continue from <out>/last.ckpt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="JPEG in, baseline-region mask out")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=64)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predicted masks against truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="decode/pipeline/storage cost report")
    p.add_argument("--images", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
