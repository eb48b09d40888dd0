"""Command-line entry point: ``aerialdet <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import cfg as cfgmod
from . import harness
from .evaluation import EvalConfig, evaluate, format_detection, load_detections
from .geometry import PixelBox, boxes_from_network, letterbox_map
from .mosaic import MosaicSource, compose_pixels, mosaic_compose, random_split_point
from .visdrone import (VISDRONE, DatasetError, AnnotationParseError, dataset_stats,
                       export_yolo_labels, image_header_dims, load_dataset, parse_annotation_file,
                       read_dims_file)
from .yolo import (DEFAULT_NMS_THRESHOLD, EVAL_CONF_THRESHOLD, Detection, decode_layer_arrays,
                   load_layer_spec, nms_indices, read_feature_map)

log = logging.getLogger("aerialdet")


def _dims(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ------------------------------------------------------------------ dataset

def cmd_stats(args) -> int:
    index = load_dataset(args.ann_dir, args.images, args.dims_file)
    stats = dataset_stats(index)
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2))
        return 0
    print("category,count," + ",".join(f"size_{int(a)}_{'inf' if b == float('inf') else int(b)}"
                                       for a, b in zip(stats.bin_edges, stats.bin_edges[1:])))
    for name in stats.ranked():
        print(f"{name},{stats.counts[name]}," + ",".join(map(str, stats.size_histogram[name])))
    return 0


def cmd_convert(args) -> int:
    index = load_dataset(args.ann_dir, args.images, args.dims_file)
    n = export_yolo_labels(index, args.out_dir, keep_others=args.keep_others)
    print(f"wrote {n} labels for {len(index)} images to {args.out_dir}")
    for stem, reason in index.skipped:
        print(f"skipped {stem}: {reason}", file=sys.stderr)
    return 0


def _read_list(path) -> list[tuple[str, str]]:
    pairs = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected 'image_path annotation_path'")
        pairs.append((parts[0], parts[1]))
    if len(pairs) < 4:
        raise ValueError(f"{path}: mosaic needs at least 4 entries, found {len(pairs)}")
    return pairs


def cmd_mosaic(args) -> int:
    pairs = _read_list(args.list_file)
    dims_override = read_dims_file(args.dims_file) if args.dims_file else {}
    rng = random.Random(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for n in range(args.count):
        chosen = rng.sample(pairs, 4)
        sources = []
        for image_path, ann_path in chosen:
            stem = Path(image_path).stem
            dims = dims_override.get(stem) or image_header_dims(image_path)
            boxes = tuple((r.category_id, r.box) for r in parse_annotation_file(ann_path)
                          if r.is_evaluable(VISDRONE))
            sources.append(MosaicSource(image_path, dims, boxes))
        split = random_split_point(args.canvas, rng)
        scales = [rng.uniform(args.min_scale, args.max_scale) for _ in range(4)]
        sample = mosaic_compose(sources, args.canvas, split, scales, args.min_visibility)
        (out_dir / f"mosaic_{n:04d}.json").write_text(json.dumps(sample.to_dict(), indent=2) + "\n",
                                                      encoding="utf-8")
        if args.render:
            import numpy as np
            from PIL import Image
            images = [np.asarray(Image.open(s.ref).convert("RGB")) for s in sources]
            Image.fromarray(compose_pixels(sample, images)).save(out_dir / f"mosaic_{n:04d}.png")
    print(f"wrote {args.count} mosaic sample(s) to {out_dir}")
    return 0


# ------------------------------------------------------------------ decode / eval

def cmd_decode(args) -> int:
    raw, _ = read_feature_map(args.tensor_file)
    spec = load_layer_spec(args.spec)
    boxes, scores, cats = decode_layer_arrays(raw, spec, args.conf)
    if args.nms is not None and len(scores):
        keep = nms_indices(boxes, scores, cats, args.nms)
        boxes, scores, cats = boxes[keep], scores[keep], cats[keep]
    if args.src_dims:
        boxes = boxes_from_network(boxes, letterbox_map(args.src_dims, spec.net_dims, args.fit))
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for b, s, k in zip(boxes, scores, cats):
            out.write(format_detection(Detection(PixelBox(*map(float, b)), float(s), int(k))) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_eval(args) -> int:
    index = load_dataset(args.ann, None, args.dims_file)
    dets = load_detections(args.det)
    config = EvalConfig(truncation_policy=args.trunc_policy, ap_interpolation=args.interp,
                        region_overlap=args.region_overlap)
    report = evaluate(index, dets, VISDRONE, config, method=args.method,
                      curves=bool(args.curves), f1=True)
    if args.curves:
        Path(args.curves).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    text = harness.emit_report(report, args.format, args.output)
    if not args.output:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ cfg

def cmd_cfg_set_resolution(args) -> int:
    doc = cfgmod.set_net_resolution(cfgmod.read_cfg(args.file), *args.size)
    if args.output:
        cfgmod.write_cfg(args.output, doc)
    else:
        sys.stdout.write(cfgmod.render_cfg(doc))
    return 0


def cmd_cfg_schedule(args) -> int:
    doc = cfgmod.read_cfg(args.file)
    schedule = cfgmod.schedule_from_cfg(doc)
    if args.images:
        print(f"# iterations per epoch: {cfgmod.iterations_per_epoch(args.images, schedule.batch)}")
    print("iteration,learning_rate")
    for it, lr in cfgmod.lr_table(schedule, args.iters, args.step):
        print(f"{it},{lr:.10g}")
    return 0


def cmd_cfg_transfer_plan(args) -> int:
    plan = cfgmod.transfer_plan(cfgmod.read_cfg(args.file), args.cut, args.counting)
    print(json.dumps(plan.summary(), indent=2))
    return 0


# ------------------------------------------------------------------ harness

def cmd_sweep(args) -> int:
    index = load_dataset(args.ann, args.images, args.dims_file)
    backend = harness.BackendSpec(args.backend_cmd, args.handshake_timeout_ms, args.image_timeout_ms)
    report = harness.run_sweep(args.resolutions, index, backend, EvalConfig(), args.warmup)
    fmt = args.format or ("json" if args.output and args.output.endswith(".json") else "csv")
    text = harness.emit_report(report, fmt, args.output, timing=not args.no_timing)
    if not args.output:
        sys.stdout.write(text)
    return 0 if all(r.status == "ok" for r in report.rows) else 2


def cmd_select(args) -> int:
    series = harness.read_series_csv(args.series)
    best = harness.select_checkpoint([(c.iteration, c.ap50, c.f1) for c in series])
    print(best)
    return 0


def cmd_bench_fps(args) -> int:
    summary = harness.measure_fps(harness.read_timing_csv(args.samples))
    print("mean_ms,median_ms,fps,count,outliers")
    print(f"{summary.mean_ms:.3f},{summary.median_ms:.3f},{summary.fps:.3g},{summary.count},"
          f"{len(summary.outliers)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aerialdet", description="Aerial detection experiment toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stats", help="per-category instance counts and size histogram")
    s.add_argument("ann_dir")
    s.add_argument("--images", help="image directory (dims from headers)")
    s.add_argument("--dims-file", help="image_id,width,height sidecar")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true")
    g.add_argument("--csv", action="store_true", help="default")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("convert", help="export darknet label files")
    s.add_argument("ann_dir")
    s.add_argument("out_dir")
    s.add_argument("--images")
    s.add_argument("--dims-file")
    s.add_argument("--keep-others", action="store_true", help="keep category 11 as an extra class")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("mosaic", help="compose 4-image mosaic samples")
    s.add_argument("list_file", help="lines of 'image_path annotation_path'")
    s.add_argument("out_dir")
    s.add_argument("--canvas", type=_dims, required=True, help="WxH")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--min-scale", type=float, default=0.5)
    s.add_argument("--max-scale", type=float, default=1.0)
    s.add_argument("--min-visibility", type=float, default=0.25)
    s.add_argument("--dims-file")
    s.add_argument("--render", action="store_true", help="also write the composed PNG")
    s.set_defaults(func=cmd_mosaic)

    s = sub.add_parser("decode", help="decode one YOLO head tensor to detections")
    s.add_argument("tensor_file")
    s.add_argument("--spec", required=True, help="layer spec JSON")
    s.add_argument("--conf", type=float, default=EVAL_CONF_THRESHOLD)
    s.add_argument("--nms", type=float, nargs="?", const=DEFAULT_NMS_THRESHOLD, default=None)
    s.add_argument("--src-dims", type=_dims, help="map boxes back to a WxH source image")
    s.add_argument("--fit", choices=("letterbox", "stretch"), default="letterbox")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("eval", help="AP/AR evaluation of detection files")
    s.add_argument("--ann", required=True)
    s.add_argument("--det", required=True)
    s.add_argument("--dims-file")
    s.add_argument("--trunc-policy", default="include", choices=("include", "exclude50"))
    s.add_argument("--interp", default="101", choices=("101", "all"))
    s.add_argument("--region-overlap", default="ioa", choices=("ioa", "iou"))
    s.add_argument("--curves", help="write full JSON report with PR curves here")
    s.add_argument("--method", default="YOLOv4")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_eval)

    c = sub.add_parser("cfg", help="darknet config utilities")
    csub = c.add_subparsers(dest="cfg_command", required=True)
    s = csub.add_parser("set-resolution", help="rewrite [net] width and height")
    s.add_argument("file")
    s.add_argument("size", type=_dims, help="WxH")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_cfg_set_resolution)
    s = csub.add_parser("schedule", help="print the learning-rate table")
    s.add_argument("file")
    s.add_argument("--iters", type=int, required=True)
    s.add_argument("--step", type=int, default=100)
    s.add_argument("--images", type=int, help="training image count (prints iterations per epoch)")
    s.set_defaults(func=cmd_cfg_schedule)
    s = csub.add_parser("transfer-plan", help="which layers load pretrained weights at a cut")
    s.add_argument("file")
    s.add_argument("--cut", type=int, required=True)
    s.add_argument("--counting", choices=("layers", "conv"), default="layers")
    s.set_defaults(func=cmd_cfg_transfer_plan)

    s = sub.add_parser("sweep", help="resolution sweep against a backend process")
    s.add_argument("--resolutions", type=_int_list, required=True, help="e.g. 416,768,1120")
    s.add_argument("--ann", required=True)
    s.add_argument("--images")
    s.add_argument("--dims-file")
    s.add_argument("--backend-cmd", required=True, help="command template containing {resolution}")
    s.add_argument("--warmup", type=int, default=harness.DEFAULT_WARMUP)
    s.add_argument("--handshake-timeout-ms", type=float, default=30_000.0)
    s.add_argument("--image-timeout-ms", type=float, default=30_000.0)
    s.add_argument("--format", choices=("csv", "json"))
    s.add_argument("--no-timing", action="store_true", help="omit latency columns")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("select", help="pick the best checkpoint from an AP/F1 series")
    s.add_argument("--series", required=True, help="CSV with header iteration,ap,f1")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("bench-fps", help="latency summary from a samples CSV")
    s.add_argument("--samples", required=True, help="CSV with a latency_ms column")
    s.set_defaults(func=cmd_bench_fps)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AnnotationParseError, DatasetError, cfgmod.CfgError, ValueError, OSError) as exc:
        print(f"aerialdet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
