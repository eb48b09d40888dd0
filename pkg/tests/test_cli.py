import json
import shlex
import sys

import numpy as np

from aerialdet.cli import main
from aerialdet.yolo import YoloLayerSpec, write_feature_map
from conftest import FIXTURES

REGRESSION = FIXTURES / "regression_table"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_stats_csv_and_json(capsys, make_dataset):
    ann, dims = make_dataset({"a": ["1,1,5,5,1,4,0,0", "1,1,50,50,1,4,0,0"], "b": ["0,0,9,9,1,9,0,0"]})
    code, out, _ = run(capsys, "stats", ann, "--dims-file", dims)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("category,count,size_")
    assert lines[1].startswith("car,2,") and lines[2].startswith("bus,1,")
    code, out, _ = run(capsys, "stats", ann, "--dims-file", dims, "--json")
    assert json.loads(out)["counts"]["car"] == 2


def test_convert(capsys, make_dataset, tmp_path):
    ann, dims = make_dataset({"a": ["100,50,200,100,1,4,0,0", "0,0,5,5,1,11,0,0"]}, dims=(1000, 500))
    code, out, _ = run(capsys, "convert", ann, tmp_path / "labels", "--dims-file", dims)
    assert code == 0 and "wrote 1 labels" in out
    assert (tmp_path / "labels" / "a.txt").read_text() == "3 0.200000 0.200000 0.200000 0.200000\n"
    run(capsys, "convert", ann, tmp_path / "l2", "--dims-file", dims, "--keep-others")
    assert (tmp_path / "l2" / "a.txt").read_text().splitlines()[1].startswith("10 ")


def test_parse_error_exit_code(capsys, make_dataset):
    ann, dims = make_dataset({"a": ["1,2,3"]})
    code, _, err = run(capsys, "stats", ann, "--dims-file", dims)
    assert code == 1 and "line 1" in err


def test_mosaic(capsys, tmp_path):
    from PIL import Image

    lines = []
    for i in range(4):
        img = tmp_path / f"s{i}.png"
        Image.new("RGB", (64, 48), (40 * i, 0, 0)).save(img)
        ann = tmp_path / f"s{i}.txt"
        ann.write_text("10,10,20,20,1,4,0,0\n")
        lines.append(f"{img} {ann}")
    (tmp_path / "list.txt").write_text("\n".join(lines) + "\n")
    code, _, _ = run(capsys, "mosaic", tmp_path / "list.txt", tmp_path / "out", "--canvas", "128x96",
                     "--seed", 3, "--count", 2, "--render")
    assert code == 0
    sample = json.loads((tmp_path / "out" / "mosaic_0000.json").read_text())
    assert sample["canvas"] == [128, 96] and len(sample["tiles"]) == 4
    assert Image.open(tmp_path / "out" / "mosaic_0001.png").size == (128, 96)
    again = tmp_path / "again"
    run(capsys, "mosaic", tmp_path / "list.txt", again, "--canvas", "128x96", "--seed", 3, "--count", 2)
    assert (again / "mosaic_0000.json").read_text() == (tmp_path / "out" / "mosaic_0000.json").read_text()


def test_decode(capsys, tmp_path):
    spec = YoloLayerSpec(2, 2, 32, ((10, 13),), 3)
    (tmp_path / "spec.json").write_text(json.dumps(spec.to_dict()))
    raw = np.full((8, 2, 2), -10.0)
    raw[:4, 0, 0] = 0.0
    raw[4, 0, 0] = raw[5 + 1, 0, 0] = 10.0  # confident category index 1 in cell (0, 0)
    write_feature_map(tmp_path / "t.bin", raw, 1, 3)
    code, out, _ = run(capsys, "decode", tmp_path / "t.bin", "--spec", tmp_path / "spec.json",
                       "--conf", 0.5, "--nms")
    assert code == 0
    (line,) = out.splitlines()
    fields = line.split(",")
    assert fields[:4] == ["11.00", "9.50", "10.00", "13.00"]
    assert fields[5:] == ["2", "-1", "-1"]
    # mapped back to a 128x64 source through the letterbox
    code, out, _ = run(capsys, "decode", tmp_path / "t.bin", "--spec", tmp_path / "spec.json",
                       "--conf", 0.5, "--src-dims", "128x64")
    assert out.split(",")[:4] == ["22.00", "0.00", "20.00", "13.00"]  # top clipped from -13


def test_eval_regression_fixture(capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "--ann", REGRESSION / "annotations", "--det", REGRESSION / "detections",
                       "--dims-file", REGRESSION / "dims.csv", "--curves", tmp_path / "c.json")
    assert code == 0
    assert out.splitlines() == ["method,mAP,AP50,AP75,AR1,AR10,AR100,AR500",
                                "YOLOv4,18.50,35.72,17.93,1.80,13.40,30.11,30.59"]
    assert "pr_curves" in json.loads((tmp_path / "c.json").read_text())


def test_cfg_commands(capsys, tmp_path):
    stock = FIXTURES / "yolov4.cfg"
    code, _, _ = run(capsys, "cfg", "set-resolution", stock, "1120x1120", "-o", tmp_path / "a.cfg")
    assert code == 0 and "width=1120" in (tmp_path / "a.cfg").read_text()
    code, _, err = run(capsys, "cfg", "set-resolution", stock, "500x500")
    assert code == 1 and "multiple of 32" in err
    code, out, _ = run(capsys, "cfg", "schedule", stock, "--iters", 2000, "--step", 500, "--images", 7019)
    assert out.splitlines()[0] == "# iterations per epoch: 110"
    assert "1000,0.0013" in out.splitlines()
    code, out, _ = run(capsys, "cfg", "transfer-plan", stock, "--cut", 137)
    plan = json.loads(out)
    assert (plan["layers_load"], plan["layers_initialize"], plan["conv_load"]) == (137, 25, 92)


def test_select_and_bench(capsys, tmp_path):
    code, out, _ = run(capsys, "select", "--series", FIXTURES / "checkpoint_series.csv")
    assert (code, out.strip()) == (0, "8000")
    (tmp_path / "t.csv").write_text("latency_ms\n435\n435\n")
    code, out, _ = run(capsys, "bench-fps", "--samples", tmp_path / "t.csv")
    assert out.splitlines()[1] == "435.000,435.000,2.3,2,0"


def test_sweep_cli(capsys, make_dataset, tmp_path):
    ann, dims = make_dataset({f"i{k}": [f"{k},{k},30,30,1,4,0,0"] for k in range(3)})
    cmd = " ".join(shlex.quote(p) for p in (sys.executable, "-m", "aerialdet.backends.gt_echo",
                                            "--ann", str(ann))) + " --resolution {resolution}"
    code, _, _ = run(capsys, "sweep", "--resolutions", "416,768", "--ann", ann, "--dims-file", dims,
                     "--backend-cmd", cmd, "--warmup", 1, "--no-timing", "-o", tmp_path / "r.csv")
    assert code == 0
    assert (tmp_path / "r.csv").read_text() == ("resolution,status,AP50,mAP,F1,images,skipped\n"
                                                 "416,ok,100.00,100.00,100.00,3,0\n"
                                                 "768,ok,100.00,100.00,100.00,3,0\n")
    code, _, _ = run(capsys, "sweep", "--resolutions", "416", "--ann", ann, "--dims-file", dims,
                     "--backend-cmd", cmd + " --fail-handshake", "-o", tmp_path / "f.json")
    assert code == 2
    assert json.loads((tmp_path / "f.json").read_text())["resolutions"][0]["status"] == "failed"
