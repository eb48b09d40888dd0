"""Write the stock YOLOv4 (CSPDarknet53 + SPP + PAN, 80 classes) darknet config.

    python tools/make_yolov4_cfg.py tests/fixtures/yolov4.cfg

The layer list is emitted block by block in darknet's own formatting so the
resulting file exercises the parser with comments, spacing variants and all
layer kinds (convolutional, shortcut, route, maxpool, upsample, yolo).
"""
import argparse
import sys

NET = """[net]
batch=64
subdivisions=8
# Training
#width=512
#height=512
width=608
height=608
channels=3
momentum=0.949
decay=0.0005
angle=0
saturation = 1.5
exposure = 1.5
hue=.1

learning_rate=0.0013
burn_in=1000
max_batches = 500500
policy=steps
steps=400000,450000
scales=.1,.1

#cutmix=1
mosaic=1

#:104x104 54:52x52 85:26x26 104:13x13 for 416
"""

ANCHORS = "12, 16, 19, 36, 40, 28, 36, 75, 76, 55, 72, 146, 142, 110, 192, 243, 459, 401"


class Builder:
    def __init__(self):
        self.blocks = []

    @property
    def n(self):
        return len(self.blocks)

    def conv(self, filters, size, stride=1, act="mish", bn=True):
        pad = 1
        lines = ["[convolutional]"]
        if bn:
            lines.append("batch_normalize=1")
        lines += [f"filters={filters}", f"size={size}", f"stride={stride}", f"pad={pad}",
                  f"activation={act}"]
        self.blocks.append("\n".join(lines))
        return self.n - 1

    def route(self, *layers):
        self.blocks.append("[route]\nlayers = " + ",".join(str(l) for l in layers))

    def shortcut(self, offset=-3):
        self.blocks.append(f"[shortcut]\nfrom={offset}\nactivation=linear")

    def maxpool(self, size):
        self.blocks.append(f"[maxpool]\nstride=1\nsize={size}")

    def upsample(self):
        self.blocks.append("[upsample]\nstride=2")

    def yolo(self, mask, scale_x_y):
        self.blocks.append("\n".join([
            "[yolo]", f"mask = {mask}", f"anchors = {ANCHORS}", "classes=80", "num=9",
            "jitter=.3", "ignore_thresh = .7", "truth_thresh = 1", f"scale_x_y = {scale_x_y}",
            "iou_thresh=0.213", "cls_normalizer=1.0", "iou_normalizer=0.07", "iou_loss=ciou",
            "nms_kind=greedynms", "beta_nms=0.6", "max_delta=5"]))


def csp_stage(b, filters, blocks, first=False):
    """Downsample then a cross-stage-partial block of residual units."""
    half = filters if first else filters // 2
    b.conv(filters, 3, 2)
    b.conv(half, 1)
    b.route(-2)
    b.conv(half, 1)
    start = b.n
    for _ in range(blocks):
        b.conv(filters // 2 if first else half, 1)
        b.conv(half, 3)
        b.shortcut()
    b.conv(half, 1)
    b.route(-1, -(b.n - start + 3))
    b.conv(filters, 1)


def build():
    b = Builder()
    b.conv(32, 3)
    csp_stage(b, 64, 1, first=True)
    csp_stage(b, 128, 2)
    csp_stage(b, 256, 8)
    csp_stage(b, 512, 8)
    csp_stage(b, 1024, 4)
    assert b.n == 105, b.n

    b.conv(512, 1, act="leaky")
    b.conv(1024, 3, act="leaky")
    b.conv(512, 1, act="leaky")
    b.blocks.append("### SPP ###\n[maxpool]\nstride=1\nsize=5")
    b.route(-2)
    b.maxpool(9)
    b.route(-4)
    b.maxpool(13)
    b.route(-1, -3, -5, -6)
    b.blocks[-1] += "\n### End SPP ###"
    b.conv(512, 1, act="leaky")
    b.conv(1024, 3, act="leaky")
    b.conv(512, 1, act="leaky")

    b.conv(256, 1, act="leaky")
    b.upsample()
    b.route(85)
    b.conv(256, 1, act="leaky")
    b.route(-1, -3)
    for f in (256, 512, 256, 512, 256):
        b.conv(f, 1 if f == 256 else 3, act="leaky")

    b.conv(128, 1, act="leaky")
    b.upsample()
    b.route(54)
    b.conv(128, 1, act="leaky")
    b.route(-1, -3)
    for f in (128, 256, 128, 256, 128):
        b.conv(f, 1 if f == 128 else 3, act="leaky")

    b.blocks.append("##########################\n\n" + _conv_text(256, 3))
    b.conv(255, 1, act="linear", bn=False)
    b.yolo("0,1,2", 1.2)
    b.route(-4)
    b.conv(256, 3, 2, act="leaky")
    b.route(-1, -16)
    for f in (256, 512, 256, 512, 256, 512):
        b.conv(f, 1 if f == 256 else 3, act="leaky")
    b.conv(255, 1, act="linear", bn=False)
    b.yolo("3,4,5", 1.1)
    b.route(-4)
    b.conv(512, 3, 2, act="leaky")
    b.route(-1, -37)
    for f in (512, 1024, 512, 1024, 512, 1024):
        b.conv(f, 1 if f == 512 else 3, act="leaky")
    b.conv(255, 1, act="linear", bn=False)
    b.yolo("6,7,8", 1.05)
    assert b.n == 162, b.n
    return NET + "\n" + "\n\n".join(b.blocks) + "\n\n"


def _conv_text(filters, size, stride=1, act="leaky"):
    return (f"[convolutional]\nbatch_normalize=1\nsize={size}\nstride={stride}\npad=1\n"
            f"filters={filters}\nactivation={act}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out")
    args = parser.parse_args(argv)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(build())
    return 0


if __name__ == "__main__":
    sys.exit(main())
