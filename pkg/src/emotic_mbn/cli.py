"""``emotic-mbn`` command line: fixture, prepare-faces, train, eval, predict, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import engine
from .dataset_io import ImageStore, generate_fixture, load_annotations, load_rgb
from .domain import BoundingBox
from .face import FaceCache, HaarCascadeDetector, StubDetector, prepare_faces

log = logging.getLogger("emotic_mbn")

_TRAIN_OVERRIDES = ("seed", "branches", "task", "lr0", "batch_size", "epochs", "c", "theta")


class UsageError(Exception):
    pass


def _add_data_flags(p, faces=True):
    p.add_argument("--data-root", type=Path, default=Path("."), help="directory image_ids are relative to")
    p.add_argument("--annotations", type=Path, default=None,
                   help="annotation CSV (default: <data-root>/annotations.csv)")
    if faces:
        p.add_argument("--faces-cache", type=Path, default=None,
                       help="face cache written by prepare-faces (default: extract faces on the fly)")
    p.add_argument("--detector", choices=("none", "haar"), default="none",
                   help="face detector; 'none' always uses the top-square fallback")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="emotic-mbn", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", default=False, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate a synthetic dataset", formatter_class=fmt)
    p.add_argument("--n", type=int, default=200, help="number of images")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("prepare-faces", help="extract 48x48 faces for every annotation", formatter_class=fmt)
    _add_data_flags(p, faces=False)
    p.add_argument("--out", type=Path, required=True, help="face cache directory")

    p = sub.add_parser("train", help="train the fusion head", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--config", type=Path, default=None, help="run config file (key = value lines)")
    p.add_argument("--out", type=Path, required=True, help="run directory for checkpoints and log")
    d = engine.TrainConfig()
    p.add_argument("--branches", default=None,
                   help=f"kind[=backbone] list (config default: {engine.format_branches(d.branches)})")
    p.add_argument("--task", choices=engine.TASKS, default=None, help=f"config default: {d.task}")
    p.add_argument("--seed", type=int, default=None, help=f"config default: {d.seed}")
    p.add_argument("--lr0", type=float, default=None, help=f"config default: {d.lr0}")
    p.add_argument("--batch-size", type=int, default=None, help=f"config default: {d.batch_size}")
    p.add_argument("--epochs", type=int, default=None, help=f"config default: {d.epochs}")
    p.add_argument("--c", type=float, default=None, help=f"class-weight constant, config default: {d.c}")
    p.add_argument("--theta", type=float, default=None, help=f"VAD loss margin, config default: {d.theta}")

    p = sub.add_parser("eval", help="evaluate a checkpoint", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint path (without suffix)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test", help="split to report on")
    p.add_argument("--task", choices=engine.TASKS, default=None, help="override the checkpoint's task")
    p.add_argument("--out", type=Path, default=None,
                   help="report JSON path, a .txt table is written next to it (default: JSON to stdout)")

    p = sub.add_parser("predict", help="predict emotions of one person", formatter_class=fmt)
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint path (without suffix)")
    p.add_argument("--image", type=Path, required=True, help="RGB image file")
    p.add_argument("--box", required=True, help="body box as x1,y1,x2,y2")
    p.add_argument("--detector", choices=("none", "haar"), default="none", help="face detector")
    p.add_argument("--out", type=Path, default=None, help="output JSON (default: stdout)")

    p = sub.add_parser("report", help="figures: AP bars, VAD errors, annotated test samples", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint used for categories")
    p.add_argument("--vad-checkpoint", type=Path, default=None,
                   help="checkpoint used for VAD (default: --checkpoint if it was trained on VAD)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--k", type=int, default=8, help="number of sampled test images in the grid")
    p.add_argument("--seed", type=int, default=0, help="sampling seed for the grid")
    return parser


def _detector(name: str):
    return HaarCascadeDetector() if name == "haar" else StubDetector(None)


def _load_data(args):
    ann = args.annotations or args.data_root / "annotations.csv"
    table = load_annotations(ann)
    images = ImageStore(args.data_root)
    faces = FaceCache(args.faces_cache) if getattr(args, "faces_cache", None) else None
    return table, images, faces


def _write_json(obj, out: Path | None):
    text = json.dumps(obj, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def cmd_fixture(args):
    table = generate_fixture(args.n, args.seed, args.out)
    log.info("wrote %d annotations to %s (%s)", len(table), args.out, table.split_counts)


def cmd_prepare_faces(args):
    table, images, _ = _load_data(args)
    manifest = prepare_faces(table, images, _detector(args.detector), args.out)
    log.info("wrote %d faces, manifest %s", len(table), manifest)


def cmd_train(args):
    overrides = {k: getattr(args, k) for k in _TRAIN_OVERRIDES}
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        config = engine.TrainConfig.from_file(args.config, **overrides)
    else:
        config = engine.TrainConfig(**{k: v for k, v in overrides.items() if v is not None})
    table, images, faces = _load_data(args)
    result = engine.train(table, images, config, faces=faces, detector=_detector(args.detector), out_dir=args.out)
    best = result.best
    log.info("best epoch %d, val metrics %s; checkpoints in %s", best.epoch, best.metrics, args.out)


def cmd_eval(args):
    checkpoint = engine.Checkpoint.load(args.checkpoint)
    table, images, faces = _load_data(args)
    report = engine.evaluate(checkpoint, table, images, args.split, faces, _detector(args.detector), task=args.task)
    _write_json(report.to_json(), args.out)
    if args.out is not None:
        args.out.with_suffix(".txt").write_text(report.to_text())
    else:
        sys.stderr.write(report.to_text())


def _parse_box(text: str) -> BoundingBox:
    try:
        x1, y1, x2, y2 = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--box must be four integers x1,y1,x2,y2, got {text!r}") from None
    box = BoundingBox(x1, y1, x2, y2)
    if not box.is_valid():
        raise UsageError(f"--box {text} is degenerate")
    return box


def cmd_predict(args):
    box = _parse_box(args.box)
    checkpoint = engine.Checkpoint.load(args.checkpoint)
    if not args.image.is_file():
        raise FileNotFoundError(f"image not found: {args.image}")
    record = engine.predict(checkpoint, load_rgb(args.image), box, _detector(args.detector),
                            image_id=str(args.image))
    _write_json(record.to_json(), args.out)


def cmd_report(args):
    from .report import write_report

    checkpoint = engine.Checkpoint.load(args.checkpoint)
    vad_ckpt = engine.Checkpoint.load(args.vad_checkpoint) if args.vad_checkpoint else None
    table, images, faces = _load_data(args)
    paths = write_report(checkpoint, table, images, args.out, faces=faces, detector=_detector(args.detector),
                         vad_checkpoint=vad_ckpt, k=args.k, seed=args.seed)
    for p in paths:
        log.info("wrote %s", p)


COMMANDS = {
    "fixture": cmd_fixture,
    "prepare-faces": cmd_prepare_faces,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"emotic-mbn {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"emotic-mbn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
