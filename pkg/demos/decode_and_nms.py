"""From a raw head tensor to source-image detections.

A fake 13x13 stride-32 head output gets a few confident cells planted in it.
After decoding and NMS the inverse letterbox puts the boxes on a 1920x1080 frame.
Run:  python3 demos/decode_and_nms.py
"""
import numpy as np

from aerialdet.geometry import boxes_from_network, letterbox_map
from aerialdet.yolo import YoloLayerSpec, decode_layer_arrays, nms_indices

ANCHORS = ((142, 110), (192, 243), (459, 401))
spec = YoloLayerSpec(13, 13, 32, ANCHORS, num_categories=10)
rng = np.random.default_rng(0)

raw = rng.normal(-6.0, 1.0, size=(spec.channels, 13, 13))
per_anchor = 5 + spec.num_categories
for anchor, row, col, cat in [(0, 6, 6, 3), (0, 6, 7, 3), (1, 2, 9, 8)]:
    base = anchor * per_anchor
    raw[base:base + 4, row, col] = rng.normal(0, 0.3, size=4)
    raw[base + 4, row, col] = 4.0          # objectness
    raw[base + 5 + cat, row, col] = 5.0    # category logit

boxes, scores, cats = decode_layer_arrays(raw, spec, conf_threshold=0.25)
print(f"decoded {len(scores)} boxes above 0.25 (network space {spec.net_dims})")

keep = nms_indices(boxes, scores, cats, iou_threshold=0.45)
print(f"NMS keeps {len(keep)}")

t = letterbox_map((1920, 1080), spec.net_dims)
print(f"letterbox scale {t.scale:.4f}, padding ({t.pad_x}, {t.pad_y})")
for b, s, k in zip(boxes_from_network(boxes[keep], t), scores[keep], cats[keep]):
    print(f"  category {k}  score {s:.3f}  box " + " ".join(f"{v:7.1f}" for v in b))
