"""Walk the accuracy/latency protocol against the synthetic backend.

The gt-echo backend answers every request with jittered ground truth and
sleeps a fixed time per image, so the sweep report shows the metric
pipeline and the FPS arithmetic without needing a trained detector.
Run:  python3 demos/resolution_sweep.py
"""
import random
import shlex
import sys
import tempfile
from pathlib import Path

from aerialdet.harness import BackendSpec, emit_report, run_sweep
from aerialdet.visdrone import load_dataset, write_dims_file

rng = random.Random(1)
work = Path(tempfile.mkdtemp(prefix="sweep_demo_"))
ann = work / "annotations"
ann.mkdir()
dims = {}
for i in range(10):
    lines = []
    for _ in range(rng.randint(3, 12)):
        w, h = rng.randint(10, 80), rng.randint(10, 60)
        lines.append(f"{rng.randint(0, 1360 - w)},{rng.randint(0, 765 - h)},{w},{h},1,{rng.randint(1, 10)},0,0")
    (ann / f"frame{i:02d}.txt").write_text("\n".join(lines) + "\n")
    dims[f"frame{i:02d}"] = (1360, 765)
write_dims_file(work / "dims.csv", dims)
index = load_dataset(ann, dims_file=work / "dims.csv")

# dropped objects cap recall; the delay stands in for network inference
cmd = [sys.executable, "-m", "aerialdet.backends.gt_echo", "--ann", str(ann),
       "--noise", "0.08", "--drop", "0.1", "--delay-ms", "40"]
backend = BackendSpec(" ".join(shlex.quote(p) for p in cmd) + " --resolution {resolution}")

report = run_sweep([416, 768, 1120], index, backend, warmup=2)
print(emit_report(report), end="")
for row in report.rows:
    print(f"{row.resolution}: {row.images} images, mean {row.timing.mean_ms:.1f} ms -> {row.timing.fps} FPS")
