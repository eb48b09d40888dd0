"""Score the shipped regression fixture and show where the AP comes from.

Run from the repository root:  python3 demos/evaluate_table_fixture.py
"""
from pathlib import Path

from aerialdet.evaluation import evaluate, load_detections
from aerialdet.harness import emit_report
from aerialdet.visdrone import dataset_stats, load_dataset

ROOT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "regression_table"

index = load_dataset(ROOT / "annotations", dims_file=ROOT / "dims.csv")
stats = dataset_stats(index)
print(f"{stats.num_images} images, {stats.total} evaluable objects, {stats.num_ignored} ignored records")
print("categories by frequency:", ", ".join(stats.ranked()))

report = evaluate(index, load_detections(ROOT / "detections"), f1=True)
print()
print(emit_report(report), end="")

# the fixture is synthetic, so categories score alike
print()
for name, ap in report.per_category_ap(0.5).items():
    print(f"  {name:16s} AP50 {100 * ap:6.2f}")

best = max(report.f1, key=lambda p: p.f1)
print(f"\nbest F1 {best.f1:.3f} at confidence {best.conf_threshold:g}")
