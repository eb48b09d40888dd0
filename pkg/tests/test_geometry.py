import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aerialdet.geometry import (PixelBox, boxes_from_network, ciou, ciou_loss, clip_box,
                                from_network, ioa, iou, iou_matrix, letterbox_map, to_network)
from oracles import box_iou, ciou_reference

coords = st.floats(-500, 500, allow_nan=False)
sizes = st.floats(0.5, 300, allow_nan=False)
boxes = st.tuples(coords, coords, sizes, sizes)


def test_iou_examples():
    assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert iou((0, 0, 2, 2), (5, 5, 2, 2)) == 0.0
    assert iou((0, 0, 2, 2), (1, 1, 2, 2)) == pytest.approx(1 / 7, abs=1e-12)


def test_iou_degenerate_is_zero():
    assert iou((0, 0, 0, 0), (0, 0, 0, 0)) == 0.0
    assert iou((0, 0, 0, 5), (0, 0, 3, 5)) == 0.0


def test_ioa_is_fraction_of_first_box():
    assert ioa((0, 0, 2, 2), (0, 0, 100, 100)) == 1.0
    assert ioa((0, 0, 2, 2), (1, 0, 100, 100)) == 0.5


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == pytest.approx(iou(b, a), abs=1e-12)
    assert 0.0 <= v <= 1.0 + 1e-12
    assert v == pytest.approx(box_iou(a, b), abs=1e-9)


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0)


@given(boxes, st.floats(0, 50), st.floats(0, 50))
def test_iou_nonincreasing_when_moving_away(a, d1, d2):
    near, far = sorted((d1, d2))
    b1 = (a[0] + near, a[1], a[2], a[3])
    b2 = (a[0] + far, a[1], a[2], a[3])
    assert iou(a, b2) <= iou(a, b1) + 1e-12


@given(st.lists(boxes, min_size=1, max_size=6), st.lists(boxes, min_size=1, max_size=6))
def test_iou_matrix_matches_scalar(xs, ys):
    m = iou_matrix(xs, ys)
    for i, a in enumerate(xs):
        for j, b in enumerate(ys):
            assert m[i, j] == pytest.approx(iou(a, b), abs=1e-9)


def test_ciou_examples():
    assert ciou((0, 0, 2, 2), (0, 0, 2, 2)) == pytest.approx(1.0)
    assert ciou_loss((0, 0, 2, 2), (0, 0, 2, 2)) == pytest.approx(0.0)
    # concentric, same aspect: only IoU remains
    assert ciou((0, 0, 4, 4), (1, 1, 2, 2)) == pytest.approx(iou((0, 0, 4, 4), (1, 1, 2, 2)))
    far = ciou((0, 0, 2, 2), (10, 10, 2, 2))
    assert far < 0
    # rho^2 = 200, c^2 = 288, iou = 0, v = 0
    assert far == pytest.approx(-200 / 288, abs=1e-12)
    assert far == pytest.approx(ciou_reference((0, 0, 2, 2), (10, 10, 2, 2)), abs=1e-12)


def test_ciou_zero_area_falls_back_to_distance_term():
    v = ciou((0, 0, 0, 2), (4, 0, 2, 2))
    # iou 0, centres (0,1) and (5,1), enclosing box 6 x 2
    assert v == pytest.approx(-25 / 40)


@given(boxes, boxes)
def test_ciou_properties(a, b):
    c = ciou(a, b)
    assert c <= iou(a, b) + 1e-12
    assert 0.0 <= 1.0 - c < 3.0
    assert c == pytest.approx(ciou_reference(a, b), abs=1e-9)


def test_letterbox_examples():
    t = letterbox_map((1920, 1080), (1120, 1120))
    assert t.scale == pytest.approx(1120 / 1920)
    assert t.scaled_dims == (1120, 630)
    assert (t.pad_x, t.pad_y) == (0, 245)
    for dims in ((416, 416), (640, 640)):
        t = letterbox_map(dims, dims)
        assert t.scale == 1.0 and (t.pad_x, t.pad_y) == (0, 0)
        assert to_network((3, 4, 5, 6), t) == (3, 4, 5, 6)


def test_letterbox_odd_padding_goes_bottom_right():
    t = letterbox_map((100, 51), (64, 64))
    new_w, new_h = t.scaled_dims
    assert new_w == 64
    assert t.pad_y == (64 - new_h) // 2
    assert 64 - new_h - t.pad_y >= t.pad_y


def test_letterbox_rejects_non_positive():
    with pytest.raises(ValueError):
        letterbox_map((0, 10), (416, 416))


def test_letterbox_corner_and_full_frame():
    t = letterbox_map((1920, 1080), (1120, 1120))
    assert to_network((0, 0, 10, 10), t)[:2] == (t.pad_x, t.pad_y)
    full = to_network((0, 0, 1920, 1080), t)
    assert full.width == pytest.approx(t.scale * 1920)
    assert full.height == pytest.approx(t.scale * 1080)


@given(st.integers(16, 4000), st.integers(16, 4000), st.sampled_from([416, 608, 768, 1120]),
       st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_letterbox_invariants(sw, sh, n, fx, fy, fw, fh):
    t = letterbox_map((sw, sh), (n, n))
    assert t.scale == pytest.approx(min(n / sw, n / sh))
    assert t.pad_x >= 0 and t.pad_y >= 0
    new_w, new_h = t.scaled_dims
    assert new_w == round(sw * t.scale) and new_h == round(sh * t.scale)
    assert 0 <= (n - new_w) - 2 * t.pad_x <= 1
    assert 0 <= (n - new_h) - 2 * t.pad_y <= 1
    assert max(new_w, new_h) == n
    box = (fx * sw * 0.9, fy * sh * 0.9, fw * sw * 0.1, fh * sh * 0.1)
    back = from_network(to_network(box, t), t)
    assert max(abs(u - v) for u, v in zip(back, box)) <= 0.5


def test_from_network_clips_to_source():
    t = letterbox_map((200, 100), (416, 416))
    b = from_network((-50, -50, 1000, 1000), t)
    assert b == PixelBox(0, 0, 200, 100)
    arr = boxes_from_network(np.array([[-50, -50, 1000, 1000]]), t)
    assert arr.tolist() == [[0, 0, 200, 100]]


def test_stretch_fit_scales_axes_independently():
    t = letterbox_map((800, 400), (416, 416), fit="stretch")
    assert (t.pad_x, t.pad_y) == (0, 0)
    assert to_network((800, 400, 0, 0), t)[:2] == pytest.approx((416, 416))


def test_clip_box():
    assert clip_box((-5, -5, 10, 10), 100, 100) == PixelBox(0, 0, 5, 5)
    assert clip_box((200, 0, 10, 10), 100, 100).width == 0


def test_letterbox_round_trip_bulk():
    rng = random.Random(7)
    worst = 0.0
    for _ in range(10_000):
        sw, sh = rng.randint(16, 4000), rng.randint(16, 4000)
        n = rng.choice([416, 608, 768, 1120])
        t = letterbox_map((sw, sh), (n, n))
        l, tp = rng.uniform(0, sw - 1), rng.uniform(0, sh - 1)
        box = (l, tp, rng.uniform(0, sw - l), rng.uniform(0, sh - tp))
        back = from_network(to_network(box, t), t)
        worst = max(worst, max(abs(u - v) for u, v in zip(back, box)))
    assert worst <= 0.5
