import sys
from pathlib import Path

import pytest

from aerialdet.geometry import PixelBox
from aerialdet.visdrone import AnnotationRecord
from aerialdet.yolo import Detection

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))


def gt(left, top, w, h, category=4, score_flag=1, truncation=0, occlusion=0):
    return AnnotationRecord(PixelBox(left, top, w, h), score_flag, category, truncation, occlusion)


def det(left, top, w, h, score, category_index=3):
    return Detection(PixelBox(left, top, w, h), score, category_index)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def make_dataset(tmp_path):
    """Write annotation files plus a dims sidecar; returns (ann_dir, dims_file)."""

    def _make(records_by_image, dims=(640, 480)):
        ann = tmp_path / "annotations"
        ann.mkdir(exist_ok=True)
        rows = ["image_id,width,height"]
        for image_id, lines in records_by_image.items():
            (ann / f"{image_id}.txt").write_text("".join(l + "\n" for l in lines))
            rows.append(f"{image_id},{dims[0]},{dims[1]}")
        dims_file = tmp_path / "dims.csv"
        dims_file.write_text("\n".join(rows) + "\n")
        return ann, dims_file

    return _make
