"""Command-line surface: weight init/inspection, detection, prior dumps,
evaluation, and the built-in selfcheck.

Exit codes: 0 success, 1 check/eval failure, 2 usage error, 3 I/O or format
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .anchors import Detection, generate_priors, prior_counts
from .config import load_config_file, resolve_postproc
from .errors import DimensionError, InputError, MissingWeightError, WeightFormatError
from .evaluate import ap_from_flags, load_scene, match_detections, synth_scene, save_scene, GroundTruthScene
from .image_io import draw_detections, read_ppm, write_ppm
from .model import detect_image, init_detector, validate_store
from .selfcheck import CHECK_NAMES, run_selfcheck
from .weights_io import load_weights, save_weights

DEFAULT_STEPS_SIZES = ((8, (16, 32)), (16, (64, 128)), (32, (256, 512)))


def _threshold(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _load_postproc(args):
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else None
    return resolve_postproc(
        file_cfg,
        conf_threshold=getattr(args, "conf", None),
        nms_iou=getattr(args, "nms", None),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_init_weights(args) -> int:
    store = init_detector(args.seed)
    save_weights(store, args.out)
    print(f"wrote {store.param_count()} parameters to {args.out}")
    return 0


def cmd_summary(args) -> int:
    store = load_weights(args.weights)
    groups: dict[str, int] = {}
    for name, tensor in store.items():
        key = name.split(".")[0].rstrip("0123456789")
        groups[key] = groups.get(key, 0) + int(tensor.size)
    width = max([len(k) for k in groups], default=6)
    for key in groups:
        print(f"{key:<{width}}  {groups[key]:>10,} parameters")
    total = store.param_count()
    size_mb = Path(args.weights).stat().st_size / 1e6
    print(f"total parameters: {total:,}" if total else "0 parameters")
    print(f"serialized size: {size_mb:.1f} MB")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_postproc(args)
    store = load_weights(args.weights)
    validate_store(store)
    image = read_ppm(args.image)
    dets = detect_image(image, store, cfg, resize=not args.no_resize)
    payload = {
        "image": str(args.image),
        "width": int(image.shape[1]),
        "height": int(image.shape[0]),
        "detections": [d.as_dict() for d in dets],
    }
    _write_json(args.out, payload)
    if args.annotate:
        write_ppm(args.annotate, draw_detections(image, dets))
    print(f"{len(dets)} detections -> {args.out}")
    return 0


def cmd_priors(args) -> int:
    levels = []
    for step, sizes in DEFAULT_STEPS_SIZES:
        count = prior_counts(args.height, args.width, [step], [sizes])[0]
        levels.append({"step": step, "sizes": list(sizes), "count": count})
    priors = generate_priors(args.height, args.width)
    payload = {
        "height": args.height,
        "width": args.width,
        "total": len(priors),
        "levels": levels,
        "priors": [[p.cx, p.cy, p.w, p.h] for p in priors],
    }
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _load_override(path: str) -> dict[str, list[Detection]]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed detections override {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputError(f"detections override {path} must map scene -> detections")
    result: dict[str, list[Detection]] = {}
    for scene, dets in payload.items():
        result[scene] = [
            Detection(
                box=tuple(float(v) for v in d["box"]),
                score=float(d["score"]),
                landmarks=np.asarray(d.get("landmarks", [[0, 0]] * 5), dtype=np.float64),
            )
            for d in dets
        ]
    return result


def cmd_eval(args) -> int:
    if args.weights is None and args.detections_override is None:
        raise InputError("--weights is required unless --detections-override is given")
    cfg = _load_postproc(args)
    scene_files = sorted(Path(args.scenes).glob("*.json"))
    if not scene_files:
        raise InputError(f"no scenes in {args.scenes}")

    override = _load_override(args.detections_override) if args.detections_override else None
    store = None
    if override is None:
        store = load_weights(args.weights)
        validate_store(store)

    rows = []
    all_scores: list[float] = []
    all_flags: list[bool] = []
    total_gt = 0
    for scene_file in scene_files:
        image_path, boxes = load_scene(scene_file)
        image = read_ppm(image_path)
        gt = GroundTruthScene(
            width=image.shape[1], height=image.shape[0], boxes=np.array(boxes).reshape(-1, 4)
        )
        key = scene_file.stem
        if override is not None:
            dets = sorted(override.get(key, []), key=lambda d: -d.score)
        else:
            dets = detect_image(image, store, cfg, resize=not args.no_resize)
        flags = match_detections(dets, gt.boxes, args.match_iou)
        rows.append(
            {
                "scene": key,
                "image": str(image_path),
                "gt": int(gt.boxes.shape[0]),
                "detections": len(dets),
                "tp": int(flags.sum()),
            }
        )
        total_gt += gt.boxes.shape[0]
        all_scores.extend(d.score for d in dets)
        all_flags.extend(bool(f) for f in flags)

    result = ap_from_flags(np.array(all_scores), np.array(all_flags), total_gt)
    payload = {
        "scene_count": len(rows),
        "total_gt": total_gt,
        "ap": result.ap,
        "precision": [float(v) for v in result.precision],
        "recall": [float(v) for v in result.recall],
        "scores": [float(v) for v in result.scores],
        "scenes": rows,
        "config": {
            "conf_threshold": cfg.conf_threshold,
            "nms_iou": cfg.nms_iou,
            "match_iou": args.match_iou,
            "resize": not args.no_resize,
        },
    }
    _write_json(args.out, payload)

    if args.report_dir:
        from .report import render_pr_curve, write_pr_csv, write_scene_csv

        report_dir = Path(args.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        write_pr_csv(report_dir / "pr_points.csv", result)
        write_scene_csv(report_dir / "scenes.csv", rows)
        render_pr_curve(report_dir / "pr_curve.png", result)

    ap_text = "undefined" if result.ap is None else f"{result.ap:.4f}"
    print(f"{len(rows)} scenes, {total_gt} ground-truth boxes, AP {ap_text}")
    return 0


def cmd_selfcheck(args) -> int:
    results = run_selfcheck(perturb=args.perturb)
    name_w = max(len(r.name) for r in results)
    total = 0.0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        total += r.seconds
        print(f"{r.name:<{name_w}}  {status}  {r.seconds:7.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"{'-' * name_w}")
    if failed:
        print(f"FAILED ({', '.join(failed)}) in {total:.1f}s")
        return 1
    print(f"all {len(results)} checks passed in {total:.1f}s")
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx in range(args.scenes):
        image, scene = synth_scene(args.seed + idx, args.faces, (args.height, args.width))
        name = f"scene_{idx:03d}"
        write_ppm(out_dir / f"{name}.ppm", image)
        save_scene(out_dir / f"{name}.json", f"{name}.ppm", scene)
    print(f"wrote {args.scenes} scenes to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lafd", description="Lightweight anchor-based face detection toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-weights", help="serialize a random-init model")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("summary", help="per-module parameter counts and file size")
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("detect", help="detect faces in a PPM image")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="detection report JSON path")
    p.add_argument("--annotate", help="write a PPM with box/landmark overlays")
    p.add_argument("--conf", type=_threshold, default=None, help="detection threshold")
    p.add_argument("--nms", type=_threshold, default=None, help="NMS IoU threshold")
    p.add_argument("--config", help="JSON config file (flags take precedence)")
    p.add_argument("--no-resize", action="store_true", help="skip the proportional expansion")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("priors", help="dump prior boxes for an input size")
    p.add_argument("--height", type=_positive_int, required=True)
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_priors)

    p = sub.add_parser("eval", help="evaluate AP over a scene directory")
    p.add_argument("--weights")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True, help="AP report JSON path")
    p.add_argument("--report-dir", help="also write PR csv/figure here")
    p.add_argument("--detections-override", help="JSON detections to score instead of running the model")
    p.add_argument("--match-iou", type=_threshold, default=0.5)
    p.add_argument("--conf", type=_threshold, default=None)
    p.add_argument("--nms", type=_threshold, default=None)
    p.add_argument("--config")
    p.add_argument("--no-resize", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", help="run the built-in verification suite")
    p.add_argument("--perturb", choices=CHECK_NAMES, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("synth", help="generate synthetic evaluation scenes")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scenes", type=_positive_int, default=3)
    p.add_argument("--faces", type=int, default=3)
    p.add_argument("--height", type=_positive_int, default=320)
    p.add_argument("--width", type=_positive_int, default=320)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, WeightFormatError, MissingWeightError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
