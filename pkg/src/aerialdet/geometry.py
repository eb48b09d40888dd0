"""Box algebra shared by every other module.

Boxes are ``(left, top, width, height)`` in continuous pixel coordinates with
y growing downward; a one-pixel box spans ``[x, x + 1)``.  Scalar helpers take
``PixelBox`` (or any 4-sequence), the ``*_matrix`` helpers take ``(N, 4)``
arrays in the same layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class PixelBox(NamedTuple):
    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def center(self) -> tuple[float, float]:
        return self.left + self.width / 2.0, self.top + self.height / 2.0

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "PixelBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "PixelBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def translate(self, dx: float, dy: float) -> "PixelBox":
        return PixelBox(self.left + dx, self.top + dy, self.width, self.height)


def _intersection(a: Sequence[float], b: Sequence[float]) -> float:
    iw = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    ih = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union; 0 for degenerate or disjoint boxes."""
    inter = _intersection(a, b)
    union = max(a[2], 0) * max(a[3], 0) + max(b[2], 0) * max(b[3], 0) - inter
    if union <= 0:
        return 0.0
    # rounding can push identical boxes a hair above 1
    return min(inter / union, 1.0)


def ioa(det: Sequence[float], region: Sequence[float]) -> float:
    """Fraction of ``det``'s area covered by ``region``."""
    area = max(det[2], 0) * max(det[3], 0)
    if area <= 0:
        return 0.0
    return _intersection(det, region) / area


def ciou(a: Sequence[float], b: Sequence[float]) -> float:
    """Complete-IoU: IoU minus centre-distance and aspect-ratio penalties.

    ``1 - ciou(a, b)`` is the regression loss.  When either box has zero area
    the aspect term is undefined and only the distance penalty is applied.
    """
    base = iou(a, b)
    ax, ay = a[0] + a[2] / 2.0, a[1] + a[3] / 2.0
    bx, by = b[0] + b[2] / 2.0, b[1] + b[3] / 2.0
    rho2 = (ax - bx) ** 2 + (ay - by) ** 2
    cw = max(a[0] + a[2], b[0] + b[2]) - min(a[0], b[0])
    ch = max(a[1] + a[3], b[1] + b[3]) - min(a[1], b[1])
    c2 = cw * cw + ch * ch
    if c2 <= 0:
        return base
    value = base - rho2 / c2
    if a[2] <= 0 or a[3] <= 0 or b[2] <= 0 or b[3] <= 0:
        return value
    v = (4.0 / math.pi**2) * (math.atan(a[2] / a[3]) - math.atan(b[2] / b[3])) ** 2
    if v == 0.0:
        return value
    alpha = v / ((1.0 - base) + v)
    return value - alpha * v


def ciou_loss(a: Sequence[float], b: Sequence[float]) -> float:
    return 1.0 - ciou(a, b)


def _as_boxes(boxes) -> np.ndarray:
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 4)
    return arr.reshape(-1, 4)


def intersection_matrix(a, b) -> np.ndarray:
    a = _as_boxes(a)
    b = _as_boxes(b)
    x1 = np.maximum(a[:, None, 0], b[None, :, 0])
    y1 = np.maximum(a[:, None, 1], b[None, :, 1])
    x2 = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    y2 = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    return np.clip(x2 - x1, 0, None) * np.clip(y2 - y1, 0, None)


def area(boxes) -> np.ndarray:
    b = _as_boxes(boxes)
    return np.clip(b[:, 2], 0, None) * np.clip(b[:, 3], 0, None)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU, shape ``(len(a), len(b))``."""
    inter = intersection_matrix(a, b)
    union = area(a)[:, None] + area(b)[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return np.minimum(out, 1.0, out=out)


def ioa_matrix(dets, regions) -> np.ndarray:
    """Pairwise intersection over the *first* argument's area."""
    inter = intersection_matrix(dets, regions)
    det_area = area(dets)[:, None]
    out = np.zeros_like(inter)
    np.divide(inter, det_area, out=out, where=det_area > 0)
    return out


def clip_box(box: Sequence[float], width: float, height: float) -> PixelBox:
    """Clip to ``[0, width) x [0, height)``; empty results keep zero size."""
    x1 = min(max(box[0], 0.0), width)
    y1 = min(max(box[1], 0.0), height)
    x2 = min(max(box[0] + box[2], 0.0), width)
    y2 = min(max(box[1] + box[3], 0.0), height)
    return PixelBox(x1, y1, max(x2 - x1, 0.0), max(y2 - y1, 0.0))


@dataclass(frozen=True)
class LetterboxTransform:
    """Affine map from source-image pixels to network-input pixels.

    ``scale_x == scale_y`` for the letterbox fit; the stretch fit scales each
    axis independently and never pads.
    """

    scale_x: float
    scale_y: float
    pad_x: int
    pad_y: int
    src_dims: tuple[int, int]
    net_dims: tuple[int, int]
    fit: str = "letterbox"

    @property
    def scale(self) -> float:
        return min(self.scale_x, self.scale_y)

    @property
    def scaled_dims(self) -> tuple[int, int]:
        return (
            int(round(self.scale_x * self.src_dims[0])),
            int(round(self.scale_y * self.src_dims[1])),
        )


def letterbox_map(src_dims: tuple[int, int], net_dims: tuple[int, int],
                  fit: str = "letterbox") -> LetterboxTransform:
    """Fit ``src_dims`` (w, h) into ``net_dims`` (w, h).

    Letterbox padding is split symmetrically with the odd pixel going to the
    bottom/right edge.
    """
    sw, sh = src_dims
    nw, nh = net_dims
    if min(sw, sh, nw, nh) <= 0:
        raise ValueError(f"dimensions must be positive, got src={src_dims} net={net_dims}")
    if fit == "stretch":
        return LetterboxTransform(nw / sw, nh / sh, 0, 0, (sw, sh), (nw, nh), fit)
    if fit != "letterbox":
        raise ValueError(f"unknown fit {fit!r}; expected 'letterbox' or 'stretch'")
    scale = min(nw / sw, nh / sh)
    new_w = int(round(sw * scale))
    new_h = int(round(sh * scale))
    return LetterboxTransform(scale, scale, (nw - new_w) // 2, (nh - new_h) // 2,
                              (sw, sh), (nw, nh), fit)


def to_network(box: Sequence[float], t: LetterboxTransform) -> PixelBox:
    return PixelBox(box[0] * t.scale_x + t.pad_x, box[1] * t.scale_y + t.pad_y,
                    box[2] * t.scale_x, box[3] * t.scale_y)


def from_network(box: Sequence[float], t: LetterboxTransform, clip: bool = True) -> PixelBox:
    out = PixelBox((box[0] - t.pad_x) / t.scale_x, (box[1] - t.pad_y) / t.scale_y,
                   box[2] / t.scale_x, box[3] / t.scale_y)
    if clip:
        return clip_box(out, t.src_dims[0], t.src_dims[1])
    return out


def boxes_from_network(boxes, t: LetterboxTransform, clip: bool = True) -> np.ndarray:
    """Vectorised :func:`from_network` over an ``(N, 4)`` array."""
    b = _as_boxes(boxes).copy()
    x1 = (b[:, 0] - t.pad_x) / t.scale_x
    y1 = (b[:, 1] - t.pad_y) / t.scale_y
    x2 = x1 + b[:, 2] / t.scale_x
    y2 = y1 + b[:, 3] / t.scale_y
    if clip:
        w, h = t.src_dims
        x1, x2 = np.clip(x1, 0, w), np.clip(x2, 0, w)
        y1, y2 = np.clip(y1, 0, h), np.clip(y2, 0, h)
    return np.stack([x1, y1, x2 - x1, y2 - y1], axis=1)
