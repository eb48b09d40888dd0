import json
import math

import numpy as np
import pytest

from aerialdet.evaluation import (FP, IGNORED, TP, EvalConfig, PrCurve, aggregate, average_precision,
                                  evaluate, f1_curve, f1_score, load_detections, match_dataset,
                                  match_image, parse_detection_line, pr_curve, write_detection_file)
from aerialdet.geometry import PixelBox
from aerialdet.yolo import Detection
from conftest import det, gt


def _curve(precision, recall, num_gt):
    n = len(precision)
    return PrCurve(np.linspace(1, 0.1, n), np.asarray(precision, float), np.asarray(recall, float),
                   num_gt, n)


def test_config_defaults():
    cfg = EvalConfig()
    assert cfg.iou_thresholds == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    assert cfg.max_dets == (1, 10, 100, 500)
    assert EvalConfig(truncation_policy="exclude50").truncation_policy == "exclude_gt_over_50"
    assert EvalConfig(ap_interpolation="all").ap_interpolation == "all-point"


@pytest.mark.parametrize("kw", [
    {"iou_thresholds": (0.6, 0.5)}, {"iou_thresholds": (0.0,)}, {"max_dets": (10, 1)},
    {"truncation_policy": "drop"}, {"occlusion_policy": "exclude"}, {"region_overlap": "giou"},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EvalConfig(**kw)


def test_match_single_exact_hit():
    m = match_image([det(0, 0, 10, 10, 0.9)], [gt(0, 0, 10, 10)])
    assert m.det_flag(0) == TP


def test_match_duplicate_is_fp():
    dets = [det(1, 0, 10, 10, 0.5), det(0, 0, 10, 10, 0.9)]
    m = match_image(dets, [gt(0, 0, 10, 10)])
    assert m.det_flag(1) == TP and m.det_flag(0) == FP


def test_match_ignored_region():
    region = gt(0, 0, 100, 100, category=0, score_flag=0)
    m = match_image([det(10, 10, 20, 20, 0.9)], [region])
    assert m.det_flag(0) == IGNORED


def test_match_prefers_evaluable_gt_over_region():
    region = gt(0, 0, 100, 100, category=0, score_flag=0)
    m = match_image([det(10, 10, 20, 20, 0.9)], [region, gt(10, 10, 20, 20)])
    assert m.det_flag(0) == TP


def test_truncation_policy_excludes_heavy_truncation():
    rec = gt(0, 0, 10, 10, truncation=2)
    d = [det(0, 0, 10, 10, 0.9)]
    assert match_image(d, [rec]).det_flag(0) == TP
    excl = match_image(d, [rec], policy=EvalConfig(truncation_policy="exclude50"))
    assert excl.det_flag(0) == IGNORED
    # excluded objects do not count as ground truth
    rep = evaluate({"a": [rec]}, {"a": d}, config=EvalConfig(truncation_policy="exclude50"))
    assert rep.num_gt.sum() == 0 and math.isnan(rep.mAP)


def test_match_is_per_category():
    m = match_image([det(0, 0, 10, 10, 0.9, category_index=0)], [gt(0, 0, 10, 10, category=4)])
    assert m.det_flag(0) == FP


def test_pr_curve_examples():
    data = {"a": [gt(0, 0, 10, 10)]}
    m = match_dataset(data, {"a": [det(0, 0, 10, 10, 0.9), det(50, 50, 10, 10, 0.8)]})
    c = pr_curve(m, "car")
    assert c.points == [(0.9, 1.0, 1.0), (0.8, 0.5, 1.0)]
    perfect = pr_curve(match_dataset(data, {"a": [det(0, 0, 10, 10, 0.9)]}), "car")
    assert perfect.precision.tolist() == [1.0]
    empty = pr_curve(match_dataset(data, {}), "car")
    assert empty.points == [] and empty.num_gt == 1
    assert pr_curve(match_dataset(data, {}), "bus").undefined


def test_average_precision_examples():
    assert average_precision(_curve([1.0, 1.0], [0.5, 1.0], 2)) == 1.0
    # recall stops 0.00..0.50 are covered: 51 of 101
    assert average_precision(_curve([1.0], [0.5], 2)) == pytest.approx(51 / 101)
    assert average_precision(_curve([1.0], [0.5], 2), "all") == pytest.approx(0.5)
    assert average_precision(_curve([], [], 3)) == 0.0
    assert math.isnan(average_precision(_curve([], [], 0)))


def test_all_point_uses_envelope():
    # P/R: (1, .25) (.5, .25) (.67, .5) -> envelope 1 then .67
    c = _curve([1.0, 0.5, 2 / 3], [0.25, 0.25, 0.5], 4)
    assert average_precision(c, "all") == pytest.approx(0.25 * 1.0 + 0.25 * 2 / 3)


@pytest.mark.parametrize("p,r,f", [(0.5, 0.5, 0.5), (1.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.8, 0.4, 0.8 * 0.4 * 2 / 1.2)])
def test_f1_score(p, r, f):
    assert f1_score(p, r) == pytest.approx(f)
    assert f == pytest.approx(0.5333333, abs=1e-6) or (p, r) != (0.8, 0.4)


def test_f1_curve_samples_scores_and_report_threshold():
    data = {"a": [gt(0, 0, 10, 10), gt(50, 0, 10, 10)]}
    dets = {"a": [det(0, 0, 10, 10, 0.9), det(200, 0, 10, 10, 0.6), det(50, 0, 10, 10, 0.1)]}
    pts = f1_curve(match_dataset(data, dets))
    assert [p.conf_threshold for p in pts] == [0.9, 0.6, 0.25, 0.1]
    at = {p.conf_threshold: p for p in pts}
    assert (at[0.25].tp, at[0.25].fp) == (1, 1)
    assert at[0.25].f1 == pytest.approx(0.5)
    assert at[0.1].recall == 1.0


def test_report_all_equal_ap():
    data = {f"i{k}": [gt(0, 0, 10, 10, category=c) for c in (1, 4, 9)] for k in range(2)}
    dets = {f"i{k}": [det(0, 0, 10, 10, 0.9, c - 1) for c in (1, 4, 9)] for k in range(2)}
    rep = evaluate(data, dets)
    assert rep.mAP == rep.AP50 == rep.AP75 == 1.0
    assert set(rep.per_category_ap()) == {"pedestrian", "car", "bus"}
    assert rep.AR == {1: 1 / 3, 10: 1.0, 100: 1.0, 500: 1.0}
    row = rep.table_row()
    assert list(row) == ["mAP", "AP50", "AP75", "AR1", "AR10", "AR100", "AR500"]
    assert row["AR1"] == pytest.approx(100 / 3)


def test_ar_top_k_truncation_is_per_image_across_categories():
    data = {"a": [gt(0, 0, 10, 10, category=1), gt(50, 0, 10, 10, category=4)]}
    dets = {"a": [det(0, 0, 10, 10, 0.9, 0), det(50, 0, 10, 10, 0.8, 3)]}
    rep = evaluate(data, dets)
    # only the top-scored detection survives k=1: pedestrian recall 1, car 0
    assert rep.AR[1] == pytest.approx(0.5)
    assert rep.AR[10] == 1.0


def test_ar_unbounded_equals_ar500_when_few_dets():
    data = {"a": [gt(x, 0, 10, 10) for x in range(0, 200, 20)]}
    dets = {"a": [det(x + 1, 0, 10, 10, 0.5 + x / 1000) for x in range(0, 200, 20)]}
    rep = evaluate(data, dets, config=EvalConfig(max_dets=(1, 10, 100, 500, 10**9)))
    assert rep.AR[10**9] == rep.AR[500]


def test_ap_uses_top_500_per_image():
    # 500 higher-scored misses push the one hit out of the evaluated set
    data = {"a": [gt(0, 0, 10, 10)]}
    misses = [det(1000 + i, 1000, 5, 5, 0.9) for i in range(500)]
    rep = evaluate(data, {"a": misses + [det(0, 0, 10, 10, 0.1)]})
    assert rep.AP50 == 0.0
    rep = evaluate(data, {"a": misses[:499] + [det(0, 0, 10, 10, 0.1)]})
    assert rep.AP50 > 0


def test_report_json_shape(tmp_path):
    rep = evaluate({"a": [gt(0, 0, 10, 10)]}, {"a": [det(0, 0, 10, 10, 0.9)]}, curves=True, f1=True)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["metrics"]["AP50"] == 100.0
    assert d["categories"]["bus"]["ap"]["0.50"] is None
    assert "car@0.50" in d["pr_curves"] and d["f1_curve"]


def test_detection_file_round_trip(tmp_path):
    dets = [Detection(PixelBox(1.25, 2.5, 10, 20), 0.75, 3), Detection(PixelBox(0, 0, 4, 4), 0.5, 9)]
    (tmp_path / "d").mkdir()
    write_detection_file(tmp_path / "d" / "x.txt", dets)
    back = load_detections(tmp_path / "d")["x"]
    assert back == [Detection(d.box, d.score, d.category_index, "image") for d in dets]
    assert parse_detection_line("1,2,3,4,0.5,0,-1,-1") is None
    with pytest.raises(ValueError):
        parse_detection_line("1,2,3")
