"""Four-image mosaic composition with box remapping.

The canvas is cut at ``split_point`` into four quadrants.  Each source is
(optionally) scaled and then anchored so that the corner nearest the split
point touches it; whatever falls outside the quadrant is cropped away.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import PixelBox

QUADRANTS = ("top-left", "top-right", "bottom-left", "bottom-right")
DEFAULT_MIN_VISIBILITY = 0.25


@dataclass(frozen=True)
class MosaicSource:
    ref: str
    dims: tuple[int, int]
    boxes: tuple[tuple[int, PixelBox], ...]  # (category_id, box)


@dataclass(frozen=True)
class Tile:
    source: str
    quadrant: str
    placement: tuple[int, int, int, int]  # canvas rect x1, y1, x2, y2
    offset: tuple[float, float]  # canvas position of the scaled source origin
    scale: float


@dataclass(frozen=True)
class RemappedBox:
    category_id: int
    box: PixelBox
    tile: int


@dataclass(frozen=True)
class MosaicSample:
    canvas: tuple[int, int]
    split_point: tuple[int, int]
    tiles: tuple[Tile, ...]
    remapped_boxes: tuple[RemappedBox, ...]
    dropped: int = 0

    def to_dict(self) -> dict:
        return {
            "canvas": list(self.canvas),
            "split_point": list(self.split_point),
            "tiles": [{"source": t.source, "quadrant": t.quadrant, "placement": list(t.placement),
                       "offset": list(t.offset), "scale": t.scale} for t in self.tiles],
            "boxes": [{"category": b.category_id, "box": [round(v, 3) for v in b.box], "tile": b.tile}
                      for b in self.remapped_boxes],
            "dropped": self.dropped,
        }


def quadrant_rects(canvas: tuple[int, int], split: tuple[int, int]) -> list[tuple[int, int, int, int]]:
    w, h = canvas
    sx, sy = split
    return [(0, 0, sx, sy), (sx, 0, w, sy), (0, sy, sx, h), (sx, sy, w, h)]


def _anchor(quadrant: int, split: tuple[int, int], scaled: tuple[float, float]) -> tuple[float, float]:
    sx, sy = split
    sw, sh = scaled
    ox = sx - sw if quadrant in (0, 2) else sx
    oy = sy - sh if quadrant in (0, 1) else sy
    return ox, oy


def mosaic_compose(samples: Sequence[MosaicSource], canvas_dims: tuple[int, int],
                   split_point: tuple[int, int], scales: Optional[Sequence[float]] = None,
                   min_visibility: float = DEFAULT_MIN_VISIBILITY) -> MosaicSample:
    """Place four sources around ``split_point`` and remap their boxes.

    Boxes are translated, clipped to their quadrant and dropped when less than
    ``min_visibility`` of their (scaled) area survives.
    """
    if len(samples) != 4:
        raise ValueError(f"mosaic needs exactly 4 sources, got {len(samples)}")
    w, h = canvas_dims
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate canvas {canvas_dims}")
    sx, sy = split_point
    if not (0 < sx < w and 0 < sy < h):
        raise ValueError(f"split point {split_point} must lie strictly inside {canvas_dims}")
    scales = [1.0] * 4 if scales is None else [float(s) for s in scales]
    if len(scales) != 4 or min(scales) <= 0:
        raise ValueError("scales must be four positive numbers")

    tiles, boxes, dropped = [], [], 0
    for q, (src, rect, s) in enumerate(zip(samples, quadrant_rects(canvas_dims, split_point), scales)):
        ox, oy = _anchor(q, split_point, (src.dims[0] * s, src.dims[1] * s))
        tiles.append(Tile(src.ref, QUADRANTS[q], rect, (ox, oy), s))
        x1, y1, x2, y2 = rect
        for category, box in src.boxes:
            bx1, by1 = box.left * s + ox, box.top * s + oy
            bx2, by2 = bx1 + box.width * s, by1 + box.height * s
            full = (bx2 - bx1) * (by2 - by1)
            cx1, cy1 = max(bx1, x1), max(by1, y1)
            cx2, cy2 = min(bx2, x2), min(by2, y2)
            if cx2 <= cx1 or cy2 <= cy1 or full <= 0:
                dropped += 1
                continue
            if (cx2 - cx1) * (cy2 - cy1) < min_visibility * full:
                dropped += 1
                continue
            boxes.append(RemappedBox(category, PixelBox(cx1, cy1, cx2 - cx1, cy2 - cy1), q))
    return MosaicSample((w, h), (sx, sy), tuple(tiles), tuple(boxes), dropped)


def random_split_point(canvas_dims: tuple[int, int], rng: random.Random,
                       low: float = 0.25, high: float = 0.75) -> tuple[int, int]:
    w, h = canvas_dims
    sx = min(max(int(round(w * rng.uniform(low, high))), 1), w - 1)
    sy = min(max(int(round(h * rng.uniform(low, high))), 1), h - 1)
    return sx, sy


def compose_pixels(sample: MosaicSample, images: Sequence[np.ndarray], fill: int = 114) -> np.ndarray:
    """Nearest-neighbour render of a mosaic from four ``(H, W[, C])`` arrays."""
    w, h = sample.canvas
    first = np.asarray(images[0])
    canvas = np.full((h, w) + first.shape[2:], fill, dtype=first.dtype)
    for tile, img in zip(sample.tiles, images):
        img = np.asarray(img)
        x1, y1, x2, y2 = tile.placement
        if x2 <= x1 or y2 <= y1:
            continue
        xs = np.floor((np.arange(x1, x2) + 0.5 - tile.offset[0]) / tile.scale).astype(int)
        ys = np.floor((np.arange(y1, y2) + 0.5 - tile.offset[1]) / tile.scale).astype(int)
        vx = (xs >= 0) & (xs < img.shape[1])
        vy = (ys >= 0) & (ys < img.shape[0])
        if not vx.any() or not vy.any():
            continue
        block = img[np.ix_(ys[vy], xs[vx])]
        cols = np.arange(x1, x2)[vx]
        rows = np.arange(y1, y2)[vy]
        canvas[np.ix_(rows, cols)] = block
    return canvas
