"""YOLO head post-processing: grid/anchor decode, SPP pooling and greedy NMS.

Raw head output for one layer is a ``(C, H, W)`` array with
``C = anchors * (5 + num_categories)``; each anchor slot holds
``tx, ty, tw, th, t_obj`` followed by one logit per category.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import PixelBox, iou_matrix

TENSOR_MAGIC = 0x59544E53
TENSOR_VERSION = 1
_HEADER = struct.Struct("<8i")

DEFAULT_SPP_KERNELS = (5, 9, 13)
EVAL_CONF_THRESHOLD = 0.005
REPORT_CONF_THRESHOLD = 0.25
DEFAULT_NMS_THRESHOLD = 0.45


@dataclass(frozen=True)
class YoloLayerSpec:
    grid_w: int
    grid_h: int
    stride: int
    anchors: tuple[tuple[float, float], ...]
    num_categories: int
    scale_x_y: float = 1.0

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("anchor list must not be empty")
        if any(w <= 0 or h <= 0 for w, h in self.anchors):
            raise ValueError("anchor dimensions must be positive")
        if min(self.grid_w, self.grid_h, self.stride, self.num_categories) <= 0:
            raise ValueError("grid, stride and category count must be positive")

    @property
    def net_dims(self) -> tuple[int, int]:
        return self.grid_w * self.stride, self.grid_h * self.stride

    @property
    def channels(self) -> int:
        return len(self.anchors) * (5 + self.num_categories)

    @classmethod
    def from_dict(cls, d: dict) -> "YoloLayerSpec":
        return cls(int(d["grid_w"]), int(d["grid_h"]), int(d["stride"]),
                   tuple((float(a[0]), float(a[1])) for a in d["anchors"]),
                   int(d["num_categories"]), float(d.get("scale_x_y", 1.0)))

    def to_dict(self) -> dict:
        return {"grid_w": self.grid_w, "grid_h": self.grid_h, "stride": self.stride,
                "anchors": [list(a) for a in self.anchors], "num_categories": self.num_categories,
                "scale_x_y": self.scale_x_y}


@dataclass(frozen=True)
class Detection:
    box: PixelBox
    score: float
    category_index: int
    space: str = "image"


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def decode_layer_arrays(raw: np.ndarray, spec: YoloLayerSpec, conf_threshold: float):
    """Vectorised decode.

    Returns ``boxes`` (N, 4) as left/top/width/height in network pixels,
    ``scores`` (N,) and ``categories`` (N,), ordered by (anchor, row, column).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {raw.shape}")
    c, h, w = raw.shape
    if c != spec.channels:
        raise ValueError(f"expected {spec.channels} channels "
                         f"({len(spec.anchors)} anchors x (5 + {spec.num_categories})), got {c}")
    if (h, w) != (spec.grid_h, spec.grid_w):
        raise ValueError(f"expected grid {spec.grid_h}x{spec.grid_w}, got {h}x{w}")
    a = len(spec.anchors)
    t = raw.reshape(a, 5 + spec.num_categories, h, w)
    s = spec.scale_x_y
    gy, gx = np.mgrid[0:h, 0:w]
    cx = (sigmoid(t[:, 0]) * s - 0.5 * (s - 1.0) + gx) * spec.stride
    cy = (sigmoid(t[:, 1]) * s - 0.5 * (s - 1.0) + gy) * spec.stride
    anchors = np.asarray(spec.anchors, dtype=np.float64)
    bw = anchors[:, 0, None, None] * np.exp(t[:, 2])
    bh = anchors[:, 1, None, None] * np.exp(t[:, 3])
    cat_logits = t[:, 5:]
    best = np.argmax(cat_logits, axis=1)
    best_logit = np.take_along_axis(cat_logits, best[:, None], axis=1)[:, 0]
    score = sigmoid(t[:, 4]) * sigmoid(best_logit)
    keep = score >= conf_threshold
    boxes = np.stack([cx - bw / 2, cy - bh / 2, bw, bh], axis=-1)[keep]
    return boxes, score[keep], best[keep]


def decode_layer(raw: np.ndarray, spec: YoloLayerSpec, conf_threshold: float = EVAL_CONF_THRESHOLD) -> list[Detection]:
    boxes, scores, cats = decode_layer_arrays(raw, spec, conf_threshold)
    return [Detection(PixelBox(*map(float, b)), float(s), int(k), "network")
            for b, s, k in zip(boxes, scores, cats)]


def spp_pool(feature_map: np.ndarray, kernel_sizes: Sequence[int] = DEFAULT_SPP_KERNELS) -> np.ndarray:
    """Size-preserving spatial pyramid pooling.

    Each kernel is a stride-1 max-pool with ``(k - 1) / 2`` padding of -inf;
    the output is ``[input, pool_k0, pool_k1, ...]`` stacked on the channel
    axis.
    """
    x = np.asarray(feature_map)
    if x.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {x.shape}")
    _, h, w = x.shape
    outputs = [x]
    for k in kernel_sizes:
        k = int(k)
        if k <= 0 or k % 2 == 0:
            raise ValueError(f"SPP kernel sizes must be positive and odd, got {k}")
        if k > min(h, w):
            raise ValueError(f"kernel {k} larger than the {h}x{w} feature map")
        r = (k - 1) // 2
        fill = -np.inf if np.issubdtype(x.dtype, np.floating) else np.iinfo(x.dtype).min
        padded = np.pad(x, ((0, 0), (r, r), (r, r)), constant_values=fill)
        windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
        outputs.append(windows.max(axis=(-2, -1)))
    return np.concatenate(outputs, axis=0)


def nms_order(scores: np.ndarray, categories: np.ndarray) -> np.ndarray:
    """Sweep order: score descending, then category, then input position."""
    n = len(scores)
    return np.lexsort((np.arange(n), categories, -np.asarray(scores, dtype=np.float64)))


def nms_indices(boxes, scores, categories, iou_threshold: float = DEFAULT_NMS_THRESHOLD,
                class_aware: bool = True) -> np.ndarray:
    """Indices kept by greedy NMS, in sweep order."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64)
    categories = np.asarray(categories)
    order = nms_order(scores, categories)
    b = boxes[order]
    c = categories[order]
    remaining = np.arange(len(order))
    keep = []
    while remaining.size:
        i = remaining[0]
        keep.append(i)
        rest = remaining[1:]
        hit = iou_matrix(b[i:i + 1], b[rest])[0] >= iou_threshold
        if class_aware:
            hit &= c[rest] == c[i]
        remaining = rest[~hit]
    return order[np.asarray(keep, dtype=np.intp)]


def nms_greedy(dets: Sequence[Detection], iou_threshold: float = DEFAULT_NMS_THRESHOLD,
               class_aware: bool = True) -> list[Detection]:
    if not dets:
        return []
    boxes = np.array([d.box for d in dets], dtype=np.float64)
    scores = np.array([d.score for d in dets])
    cats = np.array([d.category_index for d in dets])
    return [dets[i] for i in nms_indices(boxes, scores, cats, iou_threshold, class_aware)]


def write_feature_map(path, raw: np.ndarray, anchors: int, categories: int) -> None:
    """Write a fixture tensor: 8 little-endian int32 header words then float32 data."""
    raw = np.asarray(raw, dtype="<f4")
    if raw.ndim != 3:
        raise ValueError("feature map must be (C, H, W)")
    c, h, w = raw.shape
    if c != anchors * (5 + categories):
        raise ValueError(f"{c} channels inconsistent with {anchors} anchors and {categories} categories")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, c, h, w, anchors, categories, 0))
        fh.write(np.ascontiguousarray(raw).tobytes())


def read_feature_map(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, c, h, w, anchors, categories, _ = _HEADER.unpack(head)
        if magic != TENSOR_MAGIC:
            raise ValueError(f"{path}: bad magic 0x{magic & 0xFFFFFFFF:08X}")
        if version != TENSOR_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != c * h * w:
        raise ValueError(f"{path}: expected {c * h * w} floats, found {data.size}")
    header = {"channels": c, "height": h, "width": w, "anchors": anchors, "categories": categories}
    return data.reshape(c, h, w).astype(np.float32), header


def load_layer_spec(path) -> YoloLayerSpec:
    with open(path, encoding="utf-8") as fh:
        return YoloLayerSpec.from_dict(json.load(fh))
