"""Command line front end: ``camoseg {fuse,eval,augment,visdiff,gradcheck}``.

Exit status: 0 on success, 2 on invalid input, 1 on I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .augment import augment_image
from .core import MAIN, MIRROR, StreamOutput, ValidationError, read_mask_png, read_rgb_png, write_gray_png, write_rgb_png
from .dataset import load_manifest
from .fusion import fuse_with_trace, read_detections
from .gradcheck import run_suite
from .metrics import CAMO_ONLY, FULL, ThresholdRule, evaluate_dataset
from .visdiff import INGESTED, LAB, RGB, TEXTON, image_distance

log = logging.getLogger("camoseg")

GRADCHECK_TOL = 1e-4


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _load_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if getattr(args, "config", None) else config_mod.RunConfig()
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_fuse(args) -> int:
    cfg = _load_config(args)
    if args.score_threshold is not None:
        cfg = replace(cfg, fusion=replace(cfg.fusion, score_threshold=args.score_threshold))
    if args.overlap_rule is not None:
        cfg = replace(cfg, fusion=replace(cfg.fusion, overlap_rule=args.overlap_rule))
    entries = load_manifest(args.manifest)
    main_dets = read_detections(args.main)
    mirror_dets = read_detections(args.mirror)
    for path, dets, tag in ((args.main, main_dets, MAIN), (args.mirror, mirror_dets, MIRROR)):
        wrong = sorted({s for per in dets.values() for s in per} - {tag})
        if wrong:
            raise ValidationError(f"{path}: expected only {tag!r} records, found {wrong}")
    known = {e.image_id for e in entries}
    unknown = sorted((set(main_dets) | set(mirror_dets)) - known)
    if unknown:
        raise ValidationError(f"detections for images missing from the manifest: {', '.join(unknown)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def work(entry):
        w, h = entry.size()
        main = StreamOutput(MAIN, w, h, main_dets.get(entry.image_id, {}).get(MAIN, []))
        mirror = StreamOutput(MIRROR, w, h, mirror_dets.get(entry.image_id, {}).get(MIRROR, []))
        fused, trace = fuse_with_trace(main, mirror, cfg.fusion)
        write_gray_png(out / f"{entry.image_id}.png", fused)
        (out / f"{entry.image_id}.trace.json").write_text(json.dumps(trace.to_json(), indent=1) + "\n")
        return entry.image_id, len(trace.kept)

    results = _map(work, sorted(entries, key=lambda e: e.image_id), cfg.workers)
    for image_id, kept in results:
        log.info("%s: %d detections kept", image_id, kept)
    print(f"fused {len(results)} images into {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    rule = ThresholdRule.parse(args.threshold) if args.threshold else cfg.threshold
    split = {"camo": CAMO_ONLY, "full": FULL}[args.split]
    report = evaluate_dataset(args.pred, args.gt, rule, split, cfg.workers, cfg.metrics)
    report.write_csv(args.out)
    agg = report.aggregate
    print(f"{len(report.per_image)} images, threshold {rule}, split {split}")
    for name, value in agg.items():
        print(f"  {name:>10s} {value:.4f}")
    return 0


def cmd_augment(args) -> int:
    cfg = _load_config(args)
    aug = cfg.augment
    if args.per_instance is not None:
        aug = replace(aug, placements_per_instance=args.per_instance)
    if args.tolerance is not None:
        aug = replace(aug, color_tolerance=args.tolerance)
    seed = cfg.seed if args.seed is None else args.seed
    images = {p.stem: p for p in sorted(Path(args.images).iterdir()) if p.suffix.lower() in (".png", ".jpg", ".jpeg")}
    masks = {p.stem: p for p in sorted(Path(args.masks).glob("*.png"))}
    missing = sorted(set(images) - set(masks))
    if missing:
        raise ValidationError(f"missing masks for: {', '.join(missing)}")
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    def work(image_id):
        img = read_rgb_png(images[image_id])
        gt = read_mask_png(masks[image_id])
        samples = augment_image(img, gt, aug, seed)
        records = []
        for k, s in enumerate(samples):
            name = f"{image_id}_aug{k}"
            write_rgb_png(out / "images" / f"{name}.png", s.image)
            write_gray_png(out / "masks" / f"{name}.png", s.mask.astype(np.float64))
            records.append({"output": name, "operations": s.operations})
        return image_id, records

    results = _map(work, sorted(images), cfg.workers)
    manifest = {image_id: recs for image_id, recs in results}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    admitted = sum(1 for _, r in results if r)
    print(f"augmented {admitted} of {len(results)} images into {out}")
    return 0


def _parse_space(text: str):
    if text.startswith("features:"):
        return INGESTED, Path(text.split(":", 1)[1])
    names = {"rgb": RGB, "lab": LAB, "texton": TEXTON}
    if text not in names:
        raise ValidationError(f"unknown space {text!r}")
    return names[text], None


def cmd_visdiff(args) -> int:
    cfg = _load_config(args)
    space, feat_dir = _parse_space(args.space)
    flip = args.flip == "horizontal"
    images = {p.stem: p for p in sorted(Path(args.images).iterdir()) if p.suffix.lower() in (".png", ".jpg", ".jpeg")}
    masks = {p.stem: p for p in sorted(Path(args.masks).glob("*.png"))}
    missing = sorted(set(images) - set(masks))
    if missing:
        raise ValidationError(f"missing masks for: {', '.join(missing)}")

    def work(image_id):
        fpath = None
        if feat_dir is not None:
            fpath = feat_dir / f"{image_id}.feat"
        try:
            d = image_distance(space, read_rgb_png(images[image_id]), read_mask_png(masks[image_id]), flip, fpath, cfg.visdiff)
        except ValidationError as exc:
            if "degenerate region" not in str(exc):
                raise
            log.warning("skipping %s: %s", image_id, exc)
            return image_id, None
        return image_id, d

    results = _map(work, sorted(images), cfg.workers)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "space", "flip", "distance"])
        for image_id, d in results:
            if d is not None:
                w.writerow([image_id, space, args.flip, repr(d)])
    vals = [d for _, d in results if d is not None]
    mean = float(np.mean(vals)) if vals else float("nan")
    print(f"{space} ({args.flip}): mean distance {mean:.4f} over {len(vals)} images")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_suite(args.cases, args.seed)
    worst = max(report.values())
    for name, err in report.items():
        print(f"{name:>18s} max rel. error {err:.3e}")
    print(f"max relative error {worst:.3e}")
    return 0 if worst < GRADCHECK_TOL else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camoseg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers (output is identical for any count)")

    f = sub.add_parser("fuse", help="fuse main and mirror stream detections into camouflage maps")
    f.add_argument("--main", required=True, help="main-stream detections (JSON Lines)")
    f.add_argument("--mirror", required=True, help="mirror-stream detections (JSON Lines)")
    f.add_argument("--manifest", required=True, help="dataset manifest CSV")
    f.add_argument("--out", required=True, help="output directory for maps and traces")
    f.add_argument("--score-threshold", type=float)
    f.add_argument("--overlap-rule", choices=["mutual_fraction", "iou"])
    common(f)
    f.set_defaults(func=cmd_fuse)

    e = sub.add_parser("eval", help="score camouflage maps against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--threshold", default=None, help="adaptive | fixed | fixed:<value>")
    e.add_argument("--split", choices=["camo", "full"], default="full")
    e.add_argument("--out", required=True, help="per-image report CSV")
    common(e)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("augment", help="instance flip/clone augmentation")
    a.add_argument("--images", required=True)
    a.add_argument("--masks", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--per-instance", type=int)
    a.add_argument("--tolerance", type=float)
    a.add_argument("--seed", type=int)
    common(a)
    a.set_defaults(func=cmd_augment)

    v = sub.add_parser("visdiff", help="foreground/background visual difference per image")
    v.add_argument("--images", required=True)
    v.add_argument("--masks", required=True)
    v.add_argument("--space", required=True, help="rgb | lab | texton | features:DIR (DIR/<id>.feat)")
    v.add_argument("--flip", choices=["none", "horizontal"], default="none")
    v.add_argument("--out", required=True)
    common(v)
    v.set_defaults(func=cmd_visdiff)

    g = sub.add_parser("gradcheck", help="finite-difference checks of the analytic gradients")
    g.add_argument("--cases", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:  # includes ValidationError
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
