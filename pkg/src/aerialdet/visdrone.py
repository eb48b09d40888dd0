"""VisDrone-DET annotation ingestion.

Annotation files hold one object per line::

    <left>,<top>,<width>,<height>,<score>,<category>,<truncation>,<occlusion>

``score`` is 0 for entries that evaluation ignores (ignored regions) and 1
otherwise.  Truncation and occlusion are buckets: 0 none, 1 up to half,
2 more than half.
"""
from __future__ import annotations

import csv
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geometry import PixelBox, clip_box

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff")
DEFAULT_SLACK = 2
SIZE_BIN_EDGES = (0, 8, 16, 32, 64, 128, 256, float("inf"))


class AnnotationParseError(ValueError):
    def __init__(self, message: str, line_no: Optional[int] = None,
                 column: Optional[int] = None, source: Optional[str] = None):
        where = []
        if source:
            where.append(str(source))
        if line_no is not None:
            where.append(f"line {line_no}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line_no = line_no
        self.column = column
        self.source = source


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class Category:
    raw_id: int
    name: str
    evaluable: bool


@dataclass(frozen=True)
class CategoryTaxonomy:
    entries: tuple[Category, ...]

    def __post_init__(self):
        names = [c.name for c in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique")
        ids = [c.raw_id for c in self.entries]
        if ids != list(range(ids[0], ids[0] + len(ids))):
            raise ValueError("raw category ids must be contiguous and ordered")

    @property
    def evaluable(self) -> tuple[Category, ...]:
        return tuple(c for c in self.entries if c.evaluable)

    @property
    def names(self) -> tuple[str, ...]:
        """Evaluable category names in label-index order."""
        return tuple(c.name for c in self.evaluable)

    @property
    def num_evaluable(self) -> int:
        return len(self.evaluable)

    @property
    def raw_id_range(self) -> tuple[int, int]:
        return self.entries[0].raw_id, self.entries[-1].raw_id

    def category(self, raw_id: int) -> Category:
        lo, hi = self.raw_id_range
        if not lo <= raw_id <= hi:
            raise KeyError(f"category id {raw_id} outside taxonomy range {lo}..{hi}")
        return self.entries[raw_id - lo]

    def is_evaluable(self, raw_id: int) -> bool:
        lo, hi = self.raw_id_range
        return lo <= raw_id <= hi and self.entries[raw_id - lo].evaluable

    def index_of(self, raw_id: int) -> Optional[int]:
        """Zero-based label index of an evaluable raw id, else ``None``."""
        for i, c in enumerate(self.evaluable):
            if c.raw_id == raw_id:
                return i
        return None

    def raw_id_of(self, index: int) -> int:
        return self.evaluable[index].raw_id

    def by_name(self, name: str) -> Category:
        for c in self.entries:
            if c.name.lower() == name.lower():
                return c
        raise KeyError(name)


VISDRONE = CategoryTaxonomy((
    Category(0, "ignored-regions", False),
    Category(1, "pedestrian", True),
    Category(2, "person", True),
    Category(3, "bicycle", True),
    Category(4, "car", True),
    Category(5, "van", True),
    Category(6, "truck", True),
    Category(7, "tricycle", True),
    Category(8, "awning-tricycle", True),
    Category(9, "bus", True),
    Category(10, "motor", True),
    Category(11, "others", False),
))


@dataclass(frozen=True)
class AnnotationRecord:
    box: PixelBox
    score_flag: int
    category_id: int
    truncation: int = 0
    occlusion: int = 0

    @property
    def is_ignored(self) -> bool:
        """Ignored region: excluded from scoring, absorbs detections."""
        return self.score_flag == 0 or self.category_id == VISDRONE.entries[0].raw_id

    def is_evaluable(self, taxonomy: CategoryTaxonomy = VISDRONE) -> bool:
        return (self.score_flag != 0 and taxonomy.is_evaluable(self.category_id)
                and self.box.width > 0 and self.box.height > 0)


def _parse_int(token: str, line_no, column, source) -> int:
    try:
        return int(token)
    except ValueError:
        raise AnnotationParseError(f"expected an integer, got {token!r}",
                                   line_no, column, source) from None


def parse_annotation_line(line: str, line_no: Optional[int] = None,
                          taxonomy: Optional[CategoryTaxonomy] = VISDRONE,
                          source: Optional[str] = None) -> AnnotationRecord:
    """Parse one comma-separated annotation line.

    Fields beyond the eighth are ignored, as is a single trailing comma.
    """
    text = line.strip()
    if not text:
        raise AnnotationParseError("empty line", line_no, None, source)
    tokens = [t.strip() for t in text.split(",")]
    if tokens and tokens[-1] == "":
        tokens.pop()
    if len(tokens) < 8:
        raise AnnotationParseError(f"expected at least 8 fields, got {len(tokens)}",
                                   line_no, len(tokens) + 1, source)
    values = [_parse_int(tok, line_no, col, source) for col, tok in enumerate(tokens[:8], start=1)]
    left, top, width, height, score, category, trunc, occl = values
    if score not in (0, 1):
        raise AnnotationParseError(f"score flag must be 0 or 1, got {score}", line_no, 5, source)
    if trunc not in (0, 1, 2):
        raise AnnotationParseError(f"truncation bucket must be 0, 1 or 2, got {trunc}",
                                   line_no, 7, source)
    if occl not in (0, 1, 2):
        raise AnnotationParseError(f"occlusion bucket must be 0, 1 or 2, got {occl}",
                                   line_no, 8, source)
    if taxonomy is not None:
        lo, hi = taxonomy.raw_id_range
        if not lo <= category <= hi:
            raise AnnotationParseError(f"category {category} outside {lo}..{hi}",
                                       line_no, 6, source)
    return AnnotationRecord(PixelBox(left, top, width, height), score, category, trunc, occl)


def format_annotation_record(record: AnnotationRecord) -> str:
    b = record.box
    fields = (b.left, b.top, b.width, b.height, record.score_flag, record.category_id,
              record.truncation, record.occlusion)
    return ",".join(str(int(v)) for v in fields)


def parse_annotation_file(path, taxonomy: Optional[CategoryTaxonomy] = VISDRONE) -> list[AnnotationRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_annotation_line(line, line_no, taxonomy, source=str(path)))
    return records


def write_annotation_file(path, records: Iterable[AnnotationRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(format_annotation_record(rec) + "\n")


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    path: Optional[str]
    width: Optional[int]
    height: Optional[int]
    annotations: tuple[AnnotationRecord, ...]

    @property
    def dims(self) -> Optional[tuple[int, int]]:
        if self.width is None or self.height is None:
            return None
        return self.width, self.height


@dataclass(frozen=True)
class DatasetIndex:
    images: tuple[ImageEntry, ...]
    skipped: tuple[tuple[str, str], ...] = ()
    slack: float = DEFAULT_SLACK

    def __post_init__(self):
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise DatasetError("image ids must be unique")

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    def get(self, image_id: str) -> ImageEntry:
        for im in self.images:
            if im.image_id == image_id:
                return im
        raise KeyError(image_id)

    @property
    def annotations(self) -> dict[str, tuple[AnnotationRecord, ...]]:
        return {im.image_id: im.annotations for im in self.images}

    @classmethod
    def from_annotations(cls, annotations: Mapping[str, Sequence[AnnotationRecord]],
                         dims: Optional[Mapping[str, tuple[int, int]]] = None) -> "DatasetIndex":
        images = []
        for image_id in sorted(annotations):
            w, h = (dims or {}).get(image_id, (None, None))
            images.append(ImageEntry(image_id, None, w, h, tuple(annotations[image_id])))
        return cls(tuple(images))


def read_dims_file(path) -> dict[str, tuple[int, int]]:
    """Read an ``image_id,width,height`` sidecar; the header row is optional."""
    dims = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if row_no == 1 and row[0].strip().lower() in ("image_id", "image", "id"):
                continue
            if len(row) < 3:
                raise DatasetError(f"{path}: row {row_no} needs image_id,width,height")
            image_id = Path(row[0].strip()).stem
            try:
                dims[image_id] = (int(row[1]), int(row[2]))
            except ValueError:
                raise DatasetError(f"{path}: row {row_no} has non-integer dimensions") from None
    return dims


def write_dims_file(path, dims: Mapping[str, tuple[int, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "width", "height"])
        for image_id in sorted(dims):
            writer.writerow([image_id, *dims[image_id]])


def image_header_dims(path) -> tuple[int, int]:
    from PIL import Image

    with Image.open(path) as im:  # header only; pixels are decoded lazily
        return im.size


def box_within_bounds(box: Sequence[float], width: float, height: float,
                      slack: float = DEFAULT_SLACK) -> bool:
    return (box[0] >= -slack and box[1] >= -slack
            and box[0] + box[2] <= width + slack and box[1] + box[3] <= height + slack)


def load_dataset(annotation_dir, image_dir=None, dims_file=None,
                 taxonomy: CategoryTaxonomy = VISDRONE, slack: float = DEFAULT_SLACK,
                 workers: int = 1) -> DatasetIndex:
    """Pair annotation files with images (by stem) and parse them.

    Image dimensions come from ``dims_file`` when given, otherwise from the
    image headers in ``image_dir``.  With neither, dimensions are unknown and
    no bounds check is made.  Unpaired files and images with out-of-bounds
    boxes land in ``DatasetIndex.skipped``; zero pairs is fatal.
    """
    annotation_dir = Path(annotation_dir)
    ann_files = {p.stem: p for p in sorted(annotation_dir.glob("*.txt"))}
    images: dict[str, Path] = {}
    if image_dir is not None:
        for p in sorted(Path(image_dir).iterdir()):
            if p.suffix.lower() in IMAGE_SUFFIXES:
                images[p.stem] = p
    dims = read_dims_file(dims_file) if dims_file is not None else None

    skipped = []
    if image_dir is not None:
        stems = sorted(ann_files.keys() & images.keys())
        skipped += [(s, "no image") for s in sorted(ann_files.keys() - images.keys())]
        skipped += [(s, "no annotation file") for s in sorted(images.keys() - ann_files.keys())]
    elif dims is not None:
        stems = sorted(ann_files.keys() & dims.keys())
        skipped += [(s, "no dims entry") for s in sorted(ann_files.keys() - dims.keys())]
        skipped += [(s, "no annotation file") for s in sorted(dims.keys() - ann_files.keys())]
    else:
        stems = sorted(ann_files)

    def build(stem: str):
        records = tuple(parse_annotation_file(ann_files[stem], taxonomy))
        img_path = images.get(stem)
        if dims is not None and stem in dims:
            w, h = dims[stem]
        elif img_path is not None:
            w, h = image_header_dims(img_path)
        else:
            w = h = None
        if w is not None:
            for rec in records:
                if not box_within_bounds(rec.box, w, h, slack):
                    return None, f"box {tuple(rec.box)} outside {w}x{h} image"
        return ImageEntry(stem, str(img_path) if img_path else None, w, h, records), None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(build, stems))
    else:
        results = [build(s) for s in stems]

    entries = []
    for stem, (entry, reason) in zip(stems, results):
        if entry is None:
            skipped.append((stem, reason))
        else:
            entries.append(entry)
    if not entries:
        raise DatasetError(f"no usable annotation/image pairs under {annotation_dir}")
    for stem, reason in skipped:
        log.warning("skipping %s: %s", stem, reason)
    return DatasetIndex(tuple(entries), tuple(sorted(skipped)), slack)


@dataclass(frozen=True)
class YoloLabel:
    category_index: int
    cx: float
    cy: float
    w: float
    h: float

    def format(self) -> str:
        return f"{self.category_index} {self.cx:.6f} {self.cy:.6f} {self.w:.6f} {self.h:.6f}"


def to_yolo_label(record: AnnotationRecord, image_dims: tuple[int, int],
                  taxonomy: CategoryTaxonomy = VISDRONE, slack: float = DEFAULT_SLACK,
                  keep_others: bool = False) -> Optional[YoloLabel]:
    """Darknet label for one record, or ``None`` for non-trainable records.

    Truncation and occlusion are intentionally dropped.  With ``keep_others``
    the trailing non-evaluable category gets the index after the evaluable
    ones.
    """
    w, h = image_dims
    if w <= 0 or h <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_dims}")
    if record.score_flag == 0:
        return None
    if taxonomy.is_evaluable(record.category_id):
        index = taxonomy.index_of(record.category_id)
    elif keep_others and record.category_id == taxonomy.entries[-1].raw_id:
        index = taxonomy.num_evaluable
    else:
        return None
    if not box_within_bounds(record.box, w, h, slack):
        raise ValueError(f"box {tuple(record.box)} exceeds {w}x{h} image by more than {slack}px")
    box = clip_box(record.box, w, h)
    if box.width <= 0 or box.height <= 0:
        return None
    cx, cy = box.center
    return YoloLabel(index, cx / w, cy / h, box.width / w, box.height / h)


def export_yolo_labels(index: DatasetIndex, out_dir, taxonomy: CategoryTaxonomy = VISDRONE,
                       keep_others: bool = False) -> int:
    """Write one label file per image (empty when nothing is trainable)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for im in index:
        if im.dims is None:
            raise DatasetError(f"image {im.image_id} has no known dimensions")
        labels = [to_yolo_label(r, im.dims, taxonomy, index.slack, keep_others) for r in im.annotations]
        lines = [lab.format() for lab in labels if lab is not None]
        (out_dir / f"{im.image_id}.txt").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        written += len(lines)
    names = list(taxonomy.names) + ([taxonomy.entries[-1].name] if keep_others else [])
    (out_dir / "classes.names").write_text("".join(n + "\n" for n in names), encoding="utf-8")
    return written


@dataclass(frozen=True)
class DatasetStats:
    counts: dict[str, int]
    size_histogram: dict[str, list[int]]
    bin_edges: tuple[float, ...] = SIZE_BIN_EDGES
    num_images: int = 0
    num_ignored: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def ranked(self) -> list[str]:
        """Category names by descending instance count (taxonomy order on ties)."""
        order = list(self.counts)
        return sorted(order, key=lambda n: (-self.counts[n], order.index(n)))

    def to_dict(self) -> dict:
        return {
            "num_images": self.num_images,
            "num_ignored": self.num_ignored,
            "total": self.total,
            "counts": dict(self.counts),
            "size_bin_edges": [e if np.isfinite(e) else None for e in self.bin_edges],
            "size_histogram": {k: list(v) for k, v in self.size_histogram.items()},
        }


def dataset_stats(index: DatasetIndex | Mapping[str, Sequence[AnnotationRecord]],
                  taxonomy: CategoryTaxonomy = VISDRONE) -> DatasetStats:
    """Instance counts and sqrt(area) size histogram over evaluable records."""
    if isinstance(index, DatasetIndex):
        groups = [im.annotations for im in index]
    else:
        groups = list(index.values())
    counts = Counter()
    sizes: dict[str, list[float]] = {name: [] for name in taxonomy.names}
    ignored = 0
    for records in groups:
        for rec in records:
            if not rec.is_evaluable(taxonomy):
                ignored += 1
                continue
            name = taxonomy.category(rec.category_id).name
            counts[name] += 1
            sizes[name].append(float(np.sqrt(rec.box.width * rec.box.height)))
    hist = {name: np.histogram(sizes[name], bins=np.array(SIZE_BIN_EDGES))[0].tolist()
            for name in taxonomy.names}
    return DatasetStats({name: counts.get(name, 0) for name in taxonomy.names}, hist,
                        SIZE_BIN_EDGES, len(groups), ignored)


def iter_annotation_dirs(root) -> Iterable[Path]:
    """Yield every ``annotations`` directory below ``root`` (VisDrone layout)."""
    for dirpath, dirnames, _ in os.walk(root):
        if Path(dirpath).name == "annotations":
            yield Path(dirpath)
