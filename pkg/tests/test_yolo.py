import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from aerialdet.geometry import PixelBox, iou
from aerialdet.yolo import (TENSOR_MAGIC, Detection, YoloLayerSpec, decode_layer, nms_greedy,
                            nms_indices, read_feature_map, spp_pool, write_feature_map)
from oracles import decode_reference, nms_reference, spp_reference


def _spec(gw=1, gh=1, stride=32, anchors=((10, 13),), ncat=1, **kw):
    return YoloLayerSpec(gw, gh, stride, tuple(anchors), ncat, **kw)


def test_zero_logits_closed_form():
    dets = decode_layer(np.zeros((6, 1, 1)), _spec(), 0.0)
    assert len(dets) == 1
    d = dets[0]
    assert d.box == pytest.approx((16 - 5, 16 - 6.5, 10, 13))
    assert d.box.center == pytest.approx((16, 16))
    # sigma(0) * sigma(0); the objectness-times-category product
    assert d.score == pytest.approx(0.25)
    assert d.space == "network"


def test_saturated_logits_score_near_one():
    raw = np.zeros((6, 1, 1))
    raw[4] = raw[5] = 20.0
    (d,) = decode_layer(raw, _spec(), 0.0)
    assert d.score == pytest.approx(1.0, abs=1e-8)
    assert d.box == pytest.approx((11, 9.5, 10, 13))


def test_threshold_ceiling_empties_output():
    raw = np.random.default_rng(0).normal(size=(3 * 7, 4, 4))
    spec = _spec(4, 4, 8, ((5, 5), (9, 9), (20, 20)), 2)
    assert decode_layer(raw, spec, 1.0) == []


def test_shape_mismatch_names_channels():
    with pytest.raises(ValueError, match="expected 6 channels.*got 7"):
        decode_layer(np.zeros((7, 1, 1)), _spec())


def test_scale_x_y_widens_offset_range():
    raw = np.zeros((6, 1, 1))
    raw[0] = -50  # sigma -> 0
    (d,) = decode_layer(raw, _spec(scale_x_y=1.2), 0.0)
    assert d.box.center[0] == pytest.approx(-0.1 * 32)


@pytest.mark.parametrize("seed", range(5))
def test_decode_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    anchors = ((12, 16), (19, 36), (40, 28))
    spec = _spec(5, 4, 16, anchors, 3)
    raw = rng.normal(scale=2.0, size=(spec.channels, 4, 5))
    got = decode_layer(raw, spec, 0.1)
    ref = decode_reference(raw, 5, 4, 16, anchors, 3, 0.1)
    assert len(got) == len(ref)
    for d, (box, score, cat) in zip(got, ref):
        assert d.box == pytest.approx(box, abs=1e-9)
        assert d.score == pytest.approx(score, abs=1e-12)
        assert d.category_index == cat


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, (2 * 6, 3, 4), elements=st.floats(-8, 8)))
def test_decode_box_invariants(raw):
    spec = _spec(4, 3, 32, ((10, 13), (30, 60)), 1)
    for d in decode_layer(raw, spec, 0.0):
        assert d.box.width > 0 and d.box.height > 0
        cx, cy = d.box.center
        assert 0 <= cx <= 128 and 0 <= cy <= 96
        assert 0 <= d.score <= 1 and 0 <= d.category_index < 1


def test_translation_equivariance():
    rng = random.Random(11)
    spec = _spec(6, 5, 32, ((10, 13), (16, 30)), 2)
    for _ in range(200):
        raw = np.full((spec.channels, 5, 6), -30.0)
        a = rng.randrange(2)
        row, col = rng.randrange(5), rng.randrange(5)
        base = a * 7
        raw[base:base + 4, row, col] = [rng.uniform(-3, 3) for _ in range(4)]
        raw[base + 4, row, col] = raw[base + 5, row, col] = 10.0
        shifted = np.roll(raw, 1, axis=2)
        (d1,) = decode_layer(raw, spec, 0.5)
        (d2,) = decode_layer(shifted, spec, 0.5)
        assert d2.box.left - d1.box.left == pytest.approx(32, abs=1e-6)
        assert d2.box.top == pytest.approx(d1.box.top, abs=1e-9)


def test_spp_examples():
    const = np.full((2, 7, 7), 3.5)
    out = spp_pool(const, (3, 5))
    assert out.shape == (6, 7, 7) and (out == 3.5).all()
    assert (spp_pool(out[:2], (3, 5)) == out).all()

    peak = np.zeros((1, 3, 3))
    peak[0, 1, 1] = 9
    assert (spp_pool(peak, (3,))[1] == 9).all()
    corner = np.zeros((1, 3, 3))
    corner[0, 0, 0] = 9
    assert spp_pool(corner, (3,))[1].tolist() == [[9, 9, 0], [9, 9, 0], [0, 0, 0]]

    assert spp_pool(np.zeros((8, 19, 19))).shape == (32, 19, 19)


@pytest.mark.parametrize("kernels", [(4,), (0,), (21,)])
def test_spp_rejects_bad_kernels(kernels):
    with pytest.raises(ValueError):
        spp_pool(np.zeros((1, 19, 19)), kernels)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(5, 9), st.integers(5, 9)),
                  elements=st.floats(-100, 100)))
def test_spp_matches_window_oracle(x):
    out = spp_pool(x, (3, 5))
    ref = np.array(spp_reference(x.tolist(), (3, 5)))
    assert np.array_equal(out, ref)
    c = x.shape[0]
    for k in range(1, 3):
        assert (out[k * c:(k + 1) * c] >= x).all()


def test_nms_examples():
    a = Detection(PixelBox(0, 0, 10, 10), 0.9, 0)
    assert nms_greedy([a], 0.5) == [a]
    # IoU(a, b) = 80 / 120
    b = Detection(PixelBox(2, 0, 10, 10), 0.8, 0)
    assert iou(a.box, b.box) > 0.6
    assert nms_greedy([b, a], 0.5) == [a]
    c = Detection(PixelBox(2, 0, 10, 10), 0.8, 1)
    assert nms_greedy([a, c], 0.5, class_aware=True) == [a, c]
    assert nms_greedy([a, c], 0.5, class_aware=False) == [a]
    assert nms_greedy([], 0.5) == []


def test_nms_threshold_is_inclusive():
    a = Detection(PixelBox(0, 0, 10, 10), 0.9, 0)
    b = Detection(PixelBox(0, 0, 10, 5), 0.8, 0)  # IoU exactly 0.5
    assert nms_greedy([a, b], 0.5) == [a]
    assert nms_greedy([a, b], 0.51) == [a, b]


def test_nms_ties_broken_by_category_then_position():
    dets = [Detection(PixelBox(i * 100, 0, 10, 10), 0.5, cat) for i, cat in enumerate((2, 0, 1, 0))]
    assert [dets.index(d) for d in nms_greedy(dets)] == [1, 3, 2, 0]


def _random_dets(rng, n, ncat=3):
    boxes = [(rng.uniform(0, 200), rng.uniform(0, 200), rng.uniform(5, 60), rng.uniform(5, 60))
             for _ in range(n)]
    # coarse scores so ties actually occur
    scores = [rng.randint(1, 20) / 20 for _ in range(n)]
    cats = [rng.randrange(ncat) for _ in range(n)]
    return boxes, scores, cats


@pytest.mark.parametrize("class_aware", [True, False])
def test_nms_matches_reference(class_aware):
    rng = random.Random(5)
    for _ in range(100):
        boxes, scores, cats = _random_dets(rng, rng.randint(0, 80))
        thr = rng.choice([0.3, 0.45, 0.5, 0.7])
        got = nms_indices(boxes, scores, cats, thr, class_aware).tolist()
        assert got == nms_reference(boxes, scores, cats, thr, class_aware)
        for i in got:
            for j in got:
                if i < j and (cats[i] == cats[j] or not class_aware):
                    assert iou(boxes[i], boxes[j]) < thr


def test_feature_map_round_trip(tmp_path):
    raw = np.random.default_rng(1).normal(size=(14, 3, 5)).astype(np.float32)
    path = tmp_path / "t.bin"
    write_feature_map(path, raw, 2, 2)
    data = path.read_bytes()
    assert int.from_bytes(data[:4], "little") == TENSOR_MAGIC
    assert len(data) == 32 + raw.size * 4
    back, header = read_feature_map(path)
    assert np.array_equal(back, raw)
    assert header == {"channels": 14, "height": 3, "width": 5, "anchors": 2, "categories": 2}


def test_feature_map_rejects_corruption(tmp_path):
    path = tmp_path / "t.bin"
    write_feature_map(path, np.zeros((6, 2, 2)), 1, 1)
    data = bytearray(path.read_bytes())
    path.write_bytes(data[:-4])
    with pytest.raises(ValueError, match="expected 24 floats"):
        read_feature_map(path)
    data[0] ^= 0xFF
    path.write_bytes(data)
    with pytest.raises(ValueError, match="magic"):
        read_feature_map(path)


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        YoloLayerSpec(13, 13, 32, (), 10)
    with pytest.raises(ValueError):
        YoloLayerSpec(13, 13, 32, ((0, 5),), 10)
    spec = YoloLayerSpec(13, 13, 32, ((10, 13),), 10)
    assert spec.net_dims == (416, 416) and spec.channels == 15
    assert YoloLayerSpec.from_dict(spec.to_dict()) == spec
