"""Synthetic detector backend that answers with the ground truth.

Speaks the harness protocol (one JSON object per line on stdin/stdout)::

    python -m aerialdet.backends.gt_echo --ann ANNOTATION_DIR [--noise 0.1] \
        [--drop 0.05] [--delay-ms 114] [--seed 0] [--resolution 416]

Every evaluable annotation is echoed as a detection.  ``--noise`` lowers each
score by up to that amount, ``--drop`` removes objects at random and
``--delay-ms`` sleeps before answering to emulate inference time.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
import time
from pathlib import Path

from ..visdrone import VISDRONE, parse_annotation_file


def echo_detections(records, rng: random.Random, noise: float = 0.0, drop: float = 0.0) -> list[dict]:
    out = []
    for rec in records:
        if not rec.is_evaluable(VISDRONE):
            continue
        if drop > 0 and rng.random() < drop:
            continue
        score = 1.0 - noise * rng.random() if noise > 0 else 1.0
        out.append({"left": rec.box.left, "top": rec.box.top, "width": rec.box.width,
                    "height": rec.box.height, "score": round(score, 6), "category": rec.category_id})
    return out


def serve(args, stdin=sys.stdin, stdout=sys.stdout) -> int:
    ann_dir = Path(args.ann)
    rng = random.Random(args.seed)
    cache: dict[str, list] = {}
    if args.fail_handshake:
        return 3
    stdout.write(json.dumps({"ready": True, "backend": "gt-echo", "resolution": args.resolution}) + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        image_id = str(request["id"])
        start = time.perf_counter()
        if image_id not in cache:
            path = ann_dir / f"{image_id}.txt"
            cache[image_id] = parse_annotation_file(path) if path.exists() else []
        dets = echo_detections(cache[image_id], rng, args.noise, args.drop)
        if args.delay_ms > 0:
            time.sleep(args.delay_ms / 1000.0)
        if args.slow_on and image_id in args.slow_on:
            time.sleep(args.slow_ms / 1000.0)
        latency = (time.perf_counter() - start) * 1000.0
        stdout.write(json.dumps({"id": request["id"], "latency_ms": round(latency, 3),
                                 "detections": dets}) + "\n")
        stdout.flush()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gt-echo", description=__doc__.splitlines()[0])
    parser.add_argument("--ann", required=True, help="annotation directory")
    parser.add_argument("--resolution", type=int, default=None)
    parser.add_argument("--noise", type=float, default=0.0)
    parser.add_argument("--drop", type=float, default=0.0)
    parser.add_argument("--delay-ms", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--fail-handshake", action="store_true",
                        help="exit before the ready line (for failure-path tests)")
    parser.add_argument("--slow-on", nargs="*", default=None,
                        help="image ids answered only after --slow-ms (for timeout tests)")
    parser.add_argument("--slow-ms", type=float, default=2000.0)
    return serve(parser.parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
