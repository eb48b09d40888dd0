"""Detection evaluation: greedy matching, PR curves, AP/AR and F1.

Conventions follow the COCO/VisDrone toolkits:

* detections are visited in descending score order and each one takes the
  still-unmatched evaluable ground truth of its category with the highest
  IoU at or above the threshold;
* a detection that finds no evaluable partner but overlaps a policy-excluded
  ground truth (IoU) or an ignored region (intersection over the detection's
  area by default) is *ignored*: neither TP nor FP;
* AP uses 101 recall stops by default and only the top ``max(max_dets)``
  detections of every image; AR@k keeps each image's top ``k``;
* category means skip categories that have no ground truth at all.

Equal scores are ordered by box ``(left, top, width, height)``, then category,
then image, so metrics never depend on input order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .geometry import PixelBox, ioa_matrix, iou_matrix
from .visdrone import VISDRONE, AnnotationRecord, CategoryTaxonomy, DatasetIndex
from .yolo import Detection

log = logging.getLogger(__name__)

TP, FP, IGNORED = 1, 0, -1
GT_MATCHED, GT_MISSED, GT_EXCLUDED = 1, 0, -1

DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
DEFAULT_MAX_DETS = (1, 10, 100, 500)
F1_REPORT_THRESHOLD = 0.25

_POLICY_ALIASES = {"include": "include", "exclude50": "exclude_gt_over_50",
                   "exclude_gt_over_50": "exclude_gt_over_50"}
_INTERP_ALIASES = {"101": "101-point", "101-point": "101-point", "coco": "101-point",
                   "all": "all-point", "all-point": "all-point", "voc": "all-point"}


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    max_dets: tuple[int, ...] = DEFAULT_MAX_DETS
    truncation_policy: str = "include"
    occlusion_policy: str = "include"
    ap_interpolation: str = "101-point"
    region_overlap: str = "ioa"

    def __post_init__(self):
        thr = tuple(float(t) for t in self.iou_thresholds)
        if not thr or any(not 0 < t <= 1 for t in thr) or any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError(f"IoU thresholds must be strictly increasing in (0, 1], got {thr}")
        md = tuple(int(k) for k in self.max_dets)
        if not md or md[0] <= 0 or any(b <= a for a, b in zip(md, md[1:])):
            raise ValueError(f"max_dets must be strictly increasing positive ints, got {md}")
        try:
            policy = _POLICY_ALIASES[self.truncation_policy]
            interp = _INTERP_ALIASES[str(self.ap_interpolation)]
        except KeyError as exc:
            raise ValueError(f"unknown option {exc.args[0]!r}") from None
        if self.occlusion_policy != "include":
            raise ValueError("only the 'include' occlusion policy is supported")
        if self.region_overlap not in ("ioa", "iou"):
            raise ValueError("region_overlap must be 'ioa' or 'iou'")
        object.__setattr__(self, "iou_thresholds", thr)
        object.__setattr__(self, "max_dets", md)
        object.__setattr__(self, "truncation_policy", policy)
        object.__setattr__(self, "ap_interpolation", interp)

    def threshold_index(self, iou_threshold: float) -> int:
        for i, t in enumerate(self.iou_thresholds):
            if math.isclose(t, iou_threshold, abs_tol=1e-9):
                return i
        raise KeyError(f"IoU threshold {iou_threshold} not configured")


def _sort_detections(dets: Sequence[Detection]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, *dets[i].box,
                                                   dets[i].category_index))


@dataclass
class _ImageGroundTruth:
    boxes: np.ndarray  # (G, 4) evaluable boxes incl. policy-excluded ones
    categories: np.ndarray  # (G,) label index
    excluded: np.ndarray  # (G,) bool
    record_ids: np.ndarray  # (G,) position in the source record list
    regions: np.ndarray  # (R, 4)


def _split_ground_truth(gts: Sequence[AnnotationRecord], taxonomy: CategoryTaxonomy,
                        config: EvalConfig) -> _ImageGroundTruth:
    boxes, cats, excl, ids, regions = [], [], [], [], []
    for i, rec in enumerate(gts):
        if rec.is_ignored:
            regions.append(tuple(rec.box))
            continue
        if not rec.is_evaluable(taxonomy):
            continue
        boxes.append(tuple(rec.box))
        cats.append(taxonomy.index_of(rec.category_id))
        excl.append(config.truncation_policy == "exclude_gt_over_50" and rec.truncation >= 2)
        ids.append(i)
    return _ImageGroundTruth(np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
                             np.asarray(cats, dtype=np.int64), np.asarray(excl, dtype=bool),
                             np.asarray(ids, dtype=np.int64),
                             np.asarray(regions, dtype=np.float64).reshape(-1, 4))


def _greedy_match(det_boxes: np.ndarray, gt_boxes: np.ndarray, gt_excluded: np.ndarray,
                  regions: np.ndarray, thresholds: Sequence[float], region_overlap: str):
    """Match score-sorted detections of one category against its ground truth.

    Returns ``det_flags`` (T, D), ``det_gt`` (T, D) and ``gt_flags`` (T, G).
    """
    n_t, n_d, n_g = len(thresholds), len(det_boxes), len(gt_boxes)
    det_flags = np.full((n_t, n_d), FP, dtype=np.int8)
    det_gt = np.full((n_t, n_d), -1, dtype=np.int64)
    gt_flags = np.full((n_t, n_g), GT_MISSED, dtype=np.int8)
    gt_flags[:, gt_excluded] = GT_EXCLUDED
    if n_d == 0:
        return det_flags, det_gt, gt_flags
    if len(regions):
        overlap = ioa_matrix if region_overlap == "ioa" else iou_matrix
        region_best = overlap(det_boxes, regions).max(axis=1)
    else:
        region_best = np.zeros(n_d)
    ious = iou_matrix(det_boxes, gt_boxes) if n_g else np.zeros((n_d, 0))
    best_any = ious.max(axis=1) if n_g else np.zeros(n_d)
    for ti, t in enumerate(thresholds):
        det_flags[ti, region_best >= t] = IGNORED
        taken = np.zeros(n_g, dtype=bool)
        for d in np.flatnonzero(best_any >= t):
            row = ious[d]
            live = ~taken & (row >= t)
            regular = live & ~gt_excluded
            pool = regular if regular.any() else live & gt_excluded
            if not pool.any():
                continue
            g = int(np.argmax(np.where(pool, row, -1.0)))
            taken[g] = True
            det_gt[ti, d] = g
            if gt_excluded[g]:
                det_flags[ti, d] = IGNORED
            else:
                det_flags[ti, d] = TP
                gt_flags[ti, g] = GT_MATCHED
    return det_flags, det_gt, gt_flags


@dataclass
class CategoryMatch:
    """Matching of one category inside one image.

    ``det_indices`` and ``gt_indices`` point back into the caller's detection
    and annotation lists; detection rows are in score order.
    """

    category_index: int
    det_indices: np.ndarray
    det_flags: np.ndarray
    det_gt: np.ndarray
    gt_indices: np.ndarray
    gt_flags: np.ndarray


@dataclass
class MatchResult:
    iou_thresholds: tuple[float, ...]
    categories: dict[int, CategoryMatch]

    def det_flag(self, det_index: int, threshold_index: int = 0) -> int:
        for cm in self.categories.values():
            hits = np.flatnonzero(cm.det_indices == det_index)
            if hits.size:
                return int(cm.det_flags[threshold_index, hits[0]])
        raise KeyError(det_index)

    def gt_flag(self, record_index: int, threshold_index: int = 0) -> int:
        for cm in self.categories.values():
            hits = np.flatnonzero(cm.gt_indices == record_index)
            if hits.size:
                return int(cm.gt_flags[threshold_index, hits[0]])
        raise KeyError(record_index)


def match_image(dets: Sequence[Detection], gts: Sequence[AnnotationRecord],
                taxonomy: CategoryTaxonomy = VISDRONE, iou_threshold: float | Sequence[float] = 0.5,
                policy: EvalConfig = EvalConfig()) -> MatchResult:
    """Match one image's detections against its annotations, per category."""
    thresholds = (float(iou_threshold),) if np.isscalar(iou_threshold) else tuple(iou_threshold)
    gt = _split_ground_truth(gts, taxonomy, policy)
    order = np.asarray(_sort_detections(dets), dtype=np.int64)
    det_boxes = np.array([tuple(dets[i].box) for i in order], dtype=np.float64).reshape(-1, 4)
    det_cats = np.array([dets[i].category_index for i in order], dtype=np.int64)
    out = {}
    for k in sorted(set(det_cats.tolist()) | set(gt.categories.tolist())):
        dm = det_cats == k
        gm = gt.categories == k
        flags, det_gt, gt_flags = _greedy_match(det_boxes[dm], gt.boxes[gm], gt.excluded[gm],
                                                gt.regions, thresholds, policy.region_overlap)
        gt_ids = gt.record_ids[gm]
        mapped = np.where(det_gt >= 0, gt_ids[np.clip(det_gt, 0, None)] if gt_ids.size else -1, -1)
        out[k] = CategoryMatch(k, order[dm], flags, mapped, gt_ids, gt_flags)
    return MatchResult(thresholds, out)


@dataclass
class CategoryMatches:
    """All detections of one category over the dataset, in global score order."""

    scores: np.ndarray
    boxes: np.ndarray
    image_index: np.ndarray
    image_rank: np.ndarray
    flags: np.ndarray  # (T, N)
    num_gt: int
    gt_match_rank: np.ndarray  # (T, num_gt) image rank of the matching detection, inf if missed


@dataclass
class DatasetMatches:
    config: EvalConfig
    category_names: tuple[str, ...]
    image_ids: tuple[str, ...]
    per_category: list[CategoryMatches]

    def category_index(self, category) -> int:
        if isinstance(category, (int, np.integer)):
            return int(category)
        return self.category_names.index(category)


def _as_annotation_map(ground_truth) -> dict:
    if isinstance(ground_truth, DatasetIndex):
        return ground_truth.annotations
    return dict(ground_truth)


def match_dataset(ground_truth, detections: Mapping[str, Sequence[Detection]],
                  taxonomy: CategoryTaxonomy = VISDRONE, config: EvalConfig = EvalConfig()) -> DatasetMatches:
    """Run :func:`match_image` logic over every image at every threshold."""
    gt_map = _as_annotation_map(ground_truth)
    image_ids = tuple(sorted(gt_map))
    unknown = set(detections) - set(gt_map)
    if unknown:
        log.warning("ignoring detections for %d images without ground truth", len(unknown))
    thresholds = config.iou_thresholds
    n_cat = taxonomy.num_evaluable
    top_k = config.max_dets[-1]
    parts: list[list[tuple]] = [[] for _ in range(n_cat)]
    gt_parts: list[list[np.ndarray]] = [[] for _ in range(n_cat)]
    for img_idx, image_id in enumerate(image_ids):
        dets = list(detections.get(image_id, ()))
        order = _sort_detections(dets)[:top_k]
        gt = _split_ground_truth(gt_map[image_id], taxonomy, config)
        det_boxes = np.array([tuple(dets[i].box) for i in order], dtype=np.float64).reshape(-1, 4)
        det_scores = np.array([dets[i].score for i in order], dtype=np.float64)
        det_cats = np.array([dets[i].category_index for i in order], dtype=np.int64)
        ranks = np.arange(len(order))
        for k in range(n_cat):
            dm = det_cats == k
            gm = gt.categories == k
            if not dm.any() and not gm.any():
                continue
            flags, det_gt, gt_flags = _greedy_match(det_boxes[dm], gt.boxes[gm], gt.excluded[gm],
                                                    gt.regions, thresholds, config.region_overlap)
            if dm.any():
                parts[k].append((det_scores[dm], det_boxes[dm], np.full(dm.sum(), img_idx),
                                 ranks[dm], flags))
            keep_gt = ~gt.excluded[gm]
            if keep_gt.any():
                match_rank = np.full((len(thresholds), int(keep_gt.sum())), np.inf)
                det_rank = ranks[dm]
                for ti in range(len(thresholds)):
                    matched_by = np.full(int(gm.sum()), -1, dtype=np.int64)
                    tp = flags[ti] == TP
                    matched_by[det_gt[ti, tp]] = np.flatnonzero(tp)
                    hit = matched_by[keep_gt] >= 0
                    match_rank[ti, hit] = det_rank[matched_by[keep_gt][hit]]
                gt_parts[k].append(match_rank)

    per_category = []
    for k in range(n_cat):
        if parts[k]:
            scores = np.concatenate([p[0] for p in parts[k]])
            boxes = np.concatenate([p[1] for p in parts[k]])
            img = np.concatenate([p[2] for p in parts[k]])
            rank = np.concatenate([p[3] for p in parts[k]])
            flags = np.concatenate([p[4] for p in parts[k]], axis=1)
            order = np.lexsort((img, boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0], -scores))
            scores, boxes, img, rank, flags = scores[order], boxes[order], img[order], rank[order], flags[:, order]
        else:
            scores = np.zeros(0)
            boxes = np.zeros((0, 4))
            img = rank = np.zeros(0, dtype=np.int64)
            flags = np.zeros((len(thresholds), 0), dtype=np.int8)
        gmr = (np.concatenate(gt_parts[k], axis=1) if gt_parts[k]
               else np.zeros((len(thresholds), 0)))
        per_category.append(CategoryMatches(scores, boxes, img, rank, flags, gmr.shape[1], gmr))
    return DatasetMatches(config, taxonomy.names, image_ids, per_category)


@dataclass
class PrCurve:
    scores: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    num_gt: int
    num_det: int

    @property
    def undefined(self) -> bool:
        return self.num_gt == 0

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.scores.tolist(), self.precision.tolist(), self.recall.tolist()))

    def to_dict(self) -> dict:
        return {"num_gt": self.num_gt, "num_det": self.num_det,
                "score": self.scores.tolist(), "precision": self.precision.tolist(),
                "recall": self.recall.tolist()}


def pr_curve(matches: DatasetMatches, category, iou_threshold: float = 0.5,
             max_det: Optional[int] = None) -> PrCurve:
    cm = matches.per_category[matches.category_index(category)]
    ti = matches.config.threshold_index(iou_threshold)
    limit = matches.config.max_dets[-1] if max_det is None else max_det
    flags = cm.flags[ti]
    keep = (cm.image_rank < limit) & (flags != IGNORED)
    tp = np.cumsum(flags[keep] == TP)
    fp = np.cumsum(flags[keep] == FP)
    n = tp + fp
    precision = np.divide(tp, n, out=np.zeros(len(n)), where=n > 0)
    if cm.num_gt:
        recall = tp / cm.num_gt
    else:
        recall = np.zeros(len(tp))
    return PrCurve(cm.scores[keep], precision, recall, cm.num_gt, int(keep.sum()))


RECALL_STOPS = np.arange(101) / 100.0


def average_precision(curve: PrCurve, mode: str = "101-point") -> float:
    """Area under the precision envelope; ``nan`` when the curve has no ground truth."""
    mode = _INTERP_ALIASES[mode]
    if curve.undefined:
        return float("nan")
    if len(curve.recall) == 0:
        return 0.0
    envelope = np.maximum.accumulate(curve.precision[::-1])[::-1]
    if mode == "101-point":
        idx = np.searchsorted(curve.recall, RECALL_STOPS, side="left")
        valid = idx < len(envelope)
        return float(np.where(valid, envelope[np.minimum(idx, len(envelope) - 1)], 0.0).mean())
    steps = np.diff(np.concatenate([[0.0], curve.recall]))
    return float(np.sum(steps * envelope))


def f1_score(precision: float, recall: float) -> float:
    denom = precision + recall
    return 0.0 if denom <= 0 else 2.0 * precision * recall / denom


@dataclass(frozen=True)
class F1Point:
    conf_threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int


def f1_curve(matches: DatasetMatches, iou_threshold: float = 0.5,
             report_threshold: float = F1_REPORT_THRESHOLD) -> list[F1Point]:
    """Pooled (all-category) precision/recall/F1 at every confidence cut."""
    ti = matches.config.threshold_index(iou_threshold)
    limit = matches.config.max_dets[-1]
    scores, is_tp = [], []
    num_gt = 0
    for cm in matches.per_category:
        keep = (cm.image_rank < limit) & (cm.flags[ti] != IGNORED)
        scores.append(cm.scores[keep])
        is_tp.append(cm.flags[ti][keep] == TP)
        num_gt += cm.num_gt
    scores = np.concatenate(scores) if scores else np.zeros(0)
    is_tp = np.concatenate(is_tp) if is_tp else np.zeros(0, dtype=bool)
    cuts = np.unique(np.concatenate([scores, [report_threshold]]))[::-1]
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp_cum = np.concatenate([[0], np.cumsum(is_tp[order])])
    out = []
    for cut in cuts:
        n = int(np.searchsorted(-sorted_scores, -cut, side="right"))
        tp = int(tp_cum[n])
        fp = n - tp
        p = tp / n if n else 0.0
        r = tp / num_gt if num_gt else 0.0
        out.append(F1Point(float(cut), p, r, f1_score(p, r), tp, fp))
    return out


@dataclass
class EvalReport:
    config: EvalConfig
    category_names: tuple[str, ...]
    ap: np.ndarray  # (K, T), nan for categories without ground truth
    recall: np.ndarray  # (K, T, M)
    num_gt: np.ndarray  # (K,)
    num_images: int
    method: str = "YOLOv4"
    curves: dict = field(default_factory=dict)
    f1: list = field(default_factory=list)

    def _threshold_ap(self, t: float) -> float:
        try:
            ti = self.config.threshold_index(t)
        except KeyError:
            return float("nan")
        return _nanmean(self.ap[:, ti])

    @property
    def evaluated(self) -> np.ndarray:
        return self.num_gt > 0

    @property
    def mAP(self) -> float:
        per_threshold = [_nanmean(self.ap[:, ti]) for ti in range(self.ap.shape[1])]
        return _nanmean(np.asarray(per_threshold))

    @property
    def AP50(self) -> float:
        return self._threshold_ap(0.5)

    @property
    def AP75(self) -> float:
        return self._threshold_ap(0.75)

    @property
    def AR(self) -> dict[int, float]:
        return {k: _nanmean(self.recall[:, :, m]) for m, k in enumerate(self.config.max_dets)}

    def per_category_ap(self, iou_threshold: float = 0.5) -> dict[str, float]:
        ti = self.config.threshold_index(iou_threshold)
        return {name: float(self.ap[k, ti]) for k, name in enumerate(self.category_names)
                if self.num_gt[k] > 0}

    def table_row(self) -> dict[str, float]:
        """Headline metrics in percent, report column order."""
        row = {"mAP": self.mAP, "AP50": self.AP50, "AP75": self.AP75}
        row.update({f"AR{k}": v for k, v in self.AR.items()})
        return {k: 100.0 * v for k, v in row.items()}

    def to_dict(self) -> dict:
        thr = list(self.config.iou_thresholds)
        out = {
            "method": self.method,
            "num_images": self.num_images,
            "config": {
                "iou_thresholds": thr,
                "max_dets": list(self.config.max_dets),
                "truncation_policy": self.config.truncation_policy,
                "occlusion_policy": self.config.occlusion_policy,
                "ap_interpolation": self.config.ap_interpolation,
                "region_overlap": self.config.region_overlap,
            },
            "metrics": {k: round(v, 2) for k, v in self.table_row().items()},
            "metrics_exact": {k: _json_float(v / 100.0) for k, v in self.table_row().items()},
            "categories": {},
        }
        for k, name in enumerate(self.category_names):
            out["categories"][name] = {
                "num_gt": int(self.num_gt[k]),
                "ap": {f"{t:.2f}": _json_float(self.ap[k, i]) for i, t in enumerate(thr)},
                "recall": {str(md): _json_float(_nanmean(self.recall[k, :, m]))
                           for m, md in enumerate(self.config.max_dets)},
            }
        if self.curves:
            out["pr_curves"] = {f"{name}@{t:.2f}": c.to_dict() for (name, t), c in self.curves.items()}
        if self.f1:
            out["f1_curve"] = [p.__dict__ for p in self.f1]
        return out


def _json_float(v) -> Optional[float]:
    v = float(v)
    return None if math.isnan(v) else v


def _nanmean(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    values = values[~np.isnan(values)]
    return float(values.mean()) if values.size else float("nan")


def aggregate(matches: DatasetMatches, method: str = "YOLOv4", curves: bool = False,
              f1: bool = False) -> EvalReport:
    cfg = matches.config
    n_k, n_t, n_m = len(matches.per_category), len(cfg.iou_thresholds), len(cfg.max_dets)
    ap = np.full((n_k, n_t), np.nan)
    recall = np.full((n_k, n_t, n_m), np.nan)
    num_gt = np.zeros(n_k, dtype=np.int64)
    kept_curves = {}
    for k, cm in enumerate(matches.per_category):
        num_gt[k] = cm.num_gt
        if cm.num_gt == 0:
            continue
        for ti, t in enumerate(cfg.iou_thresholds):
            curve = pr_curve(matches, k, t)
            ap[k, ti] = average_precision(curve, cfg.ap_interpolation)
            if curves:
                kept_curves[(matches.category_names[k], t)] = curve
            for m, md in enumerate(cfg.max_dets):
                recall[k, ti, m] = np.count_nonzero(cm.gt_match_rank[ti] < md) / cm.num_gt
    f1_points = f1_curve(matches) if f1 and any(math.isclose(t, 0.5) for t in cfg.iou_thresholds) else []
    return EvalReport(cfg, matches.category_names, ap, recall, num_gt, len(matches.image_ids),
                      method, kept_curves, f1_points)


def evaluate(ground_truth, detections: Mapping[str, Sequence[Detection]],
             taxonomy: CategoryTaxonomy = VISDRONE, config: EvalConfig = EvalConfig(),
             method: str = "YOLOv4", curves: bool = False, f1: bool = False) -> EvalReport:
    """Match and aggregate in one call."""
    matches = match_dataset(ground_truth, detections, taxonomy, config)
    return aggregate(matches, method=method, curves=curves, f1=f1)


def parse_detection_line(line: str, taxonomy: CategoryTaxonomy = VISDRONE,
                         line_no: Optional[int] = None) -> Optional[Detection]:
    """``left,top,width,height,score,category[,...]`` -> Detection (image space).

    Returns ``None`` for non-evaluable categories.
    """
    tokens = [t.strip() for t in line.strip().rstrip(",").split(",")]
    if len(tokens) < 6:
        raise ValueError(f"line {line_no}: expected at least 6 fields, got {len(tokens)}")
    try:
        left, top, width, height, score = (float(t) for t in tokens[:5])
        category = int(float(tokens[5]))
    except ValueError:
        raise ValueError(f"line {line_no}: non-numeric field in {line.strip()!r}") from None
    index = taxonomy.index_of(category)
    if index is None:
        return None
    return Detection(PixelBox(left, top, width, height), score, index, "image")


def read_detection_file(path, taxonomy: CategoryTaxonomy = VISDRONE) -> list[Detection]:
    dets = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                det = parse_detection_line(line, taxonomy, line_no)
                if det is not None:
                    dets.append(det)
    return dets


def format_detection(det: Detection, taxonomy: CategoryTaxonomy = VISDRONE) -> str:
    b = det.box
    return (f"{b.left:.2f},{b.top:.2f},{b.width:.2f},{b.height:.2f},{det.score:.6f},"
            f"{taxonomy.raw_id_of(det.category_index)},-1,-1")


def write_detection_file(path, dets: Sequence[Detection], taxonomy: CategoryTaxonomy = VISDRONE) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for det in dets:
            fh.write(format_detection(det, taxonomy) + "\n")


def load_detections(det_dir, taxonomy: CategoryTaxonomy = VISDRONE) -> dict[str, list[Detection]]:
    return {p.stem: read_detection_file(p, taxonomy) for p in sorted(Path(det_dir).glob("*.txt"))}
