"""Aerial object detection experiment toolkit.

VisDrone ingestion, box geometry, YOLO head decoding and NMS, COCO-style
AP/AR evaluation, darknet config arithmetic and a timing harness.
"""
from .geometry import PixelBox, ciou, iou, letterbox_map, from_network, to_network
from .visdrone import VISDRONE, AnnotationRecord, DatasetIndex, load_dataset, dataset_stats
from .yolo import Detection, YoloLayerSpec, decode_layer, nms_greedy, spp_pool
from .evaluation import EvalConfig, EvalReport, evaluate, match_image, pr_curve, average_precision
from .cfg import parse_cfg, render_cfg, iterations_per_epoch, lr_at, transfer_plan
from .harness import BackendSpec, emit_report, measure_fps, run_sweep, select_checkpoint

__version__ = "0.1.0"
