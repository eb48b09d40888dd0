"""Experiment protocols: resolution sweep with latency capture, checkpoint
selection, FPS summaries and report emission.

Detectors run out of process.  The harness launches one backend per
resolution and talks newline-delimited JSON over its stdin/stdout:

* backend -> harness, once at start-up: ``{"ready": true, ...}``
* harness -> backend: ``{"id", "image", "width", "height", "net_w", "net_h"}``
* backend -> harness: ``{"id", "latency_ms"?, "detections": [{"left", "top",
  "width", "height", "score", "category"}]}``

Boxes are in source-image pixels and ``category`` is the raw VisDrone id.
Latency is the harness's own wall clock around one request/response; a
``latency_ms`` reported by the backend is kept alongside as the backend-side
span.  Images are sent strictly one at a time.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import queue
import shlex
import statistics
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .evaluation import EvalConfig, EvalReport, evaluate
from .geometry import PixelBox
from .visdrone import VISDRONE, CategoryTaxonomy, DatasetIndex
from .yolo import Detection

log = logging.getLogger(__name__)

DEFAULT_WARMUP = 5
OUTLIER_FACTOR = 5.0
RESOLUTION_MULTIPLE = 32
EVAL_TABLE_COLUMNS = ("mAP", "AP50", "AP75", "AR1", "AR10", "AR100", "AR500")


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackendSpec:
    command: str
    handshake_timeout_ms: float = 30_000.0
    image_timeout_ms: float = 30_000.0
    resolution_param: str = "resolution"

    def __post_init__(self):
        if self.placeholder not in self.command:
            raise ValueError(f"backend command must contain {self.placeholder}")

    @property
    def placeholder(self) -> str:
        return "{" + self.resolution_param + "}"

    def argv(self, resolution: int) -> list[str]:
        return shlex.split(self.command.replace(self.placeholder, str(resolution)))


@dataclass(frozen=True)
class TimingSample:
    image_id: str
    latency_ms: float
    resolution: int
    backend_latency_ms: Optional[float] = None

    def __post_init__(self):
        if not self.latency_ms > 0:
            raise ValueError(f"latency must be positive, got {self.latency_ms}")


@dataclass(frozen=True)
class FpsSummary:
    mean_ms: float
    median_ms: float
    fps: float
    count: int
    outliers: tuple[int, ...] = ()

    def __iter__(self):
        return iter((self.mean_ms, self.median_ms, self.fps))


def _three_sig(x: float) -> float:
    return float(f"{x:.3g}")


def measure_fps(samples: Sequence[TimingSample | float]) -> FpsSummary:
    """Mean/median latency and FPS (1000 / mean, three significant figures).

    Samples slower than five times the median are listed in ``outliers`` but
    still counted.
    """
    latencies = [s.latency_ms if isinstance(s, TimingSample) else float(s) for s in samples]
    if not latencies:
        raise ValueError("no timing samples")
    mean = statistics.fmean(latencies)
    median = statistics.median(latencies)
    outliers = tuple(i for i, v in enumerate(latencies) if v > OUTLIER_FACTOR * median)
    return FpsSummary(mean, median, _three_sig(1000.0 / mean), len(latencies), outliers)


class BackendProcess:
    """One running backend; use as a context manager so it is always reaped."""

    def __init__(self, argv: Sequence[str]):
        self.argv = list(argv)
        self._stderr = tempfile.TemporaryFile(mode="w+b")
        self.proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=self._stderr, text=True, bufsize=1)
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self.stale = 0

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_message(self, deadline: float) -> dict:
        while True:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                raise TimeoutError
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise TimeoutError from None
            if line is None:
                raise BackendError(f"backend exited (code {self.proc.poll()}): {self.stderr_tail()}")
            if not line.strip():
                continue
            try:
                return json.loads(line)
            except json.JSONDecodeError:
                log.warning("backend wrote non-JSON line: %r", line[:200])

    def handshake(self, timeout_ms: float) -> dict:
        deadline = time.perf_counter() + timeout_ms / 1000.0
        try:
            msg = self._next_message(deadline)
        except TimeoutError:
            raise BackendError(f"no ready line within {timeout_ms:.0f} ms") from None
        if not msg.get("ready"):
            raise BackendError(f"unexpected handshake message {msg!r}")
        return msg

    def request(self, payload: dict, timeout_ms: float) -> tuple[dict, float]:
        """Send one request and wait for its answer; returns (response, wall ms)."""
        line = json.dumps(payload) + "\n"
        start = time.perf_counter()
        deadline = start + timeout_ms / 1000.0
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"backend closed its input: {exc}") from None
        while True:
            msg = self._next_message(deadline)
            if msg.get("id") == payload["id"]:
                return msg, (time.perf_counter() - start) * 1000.0
            self.stale += 1

    def stderr_tail(self, limit: int = 500) -> str:
        self._stderr.seek(0)
        return self._stderr.read().decode("utf-8", "replace")[-limit:].strip()

    def close(self, timeout: float = 5.0) -> None:
        try:
            if self.proc.stdin and not self.proc.stdin.closed:
                self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self._reader.join(timeout=timeout)
        self._stderr.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ResolutionResult:
    resolution: int
    status: str
    ap50: float = float("nan")
    map: float = float("nan")
    f1: float = float("nan")
    timing: Optional[FpsSummary] = None
    backend_timing: Optional[FpsSummary] = None
    images: int = 0
    skipped: int = 0
    stale: int = 0
    restarts: int = 0
    error: str = ""
    samples: list[TimingSample] = field(default_factory=list, repr=False)
    detections: dict = field(default_factory=dict, repr=False)
    report: Optional[EvalReport] = field(default=None, repr=False)


@dataclass(frozen=True)
class CheckpointResult:
    iteration: int
    ap50: float
    f1: float


@dataclass
class SweepReport:
    rows: list[ResolutionResult] = field(default_factory=list)
    checkpoints: list[CheckpointResult] = field(default_factory=list)


def _parse_detections(items: Iterable[dict], taxonomy: CategoryTaxonomy) -> list[Detection]:
    dets = []
    for d in items:
        index = taxonomy.index_of(int(d["category"]))
        if index is None:
            continue
        dets.append(Detection(PixelBox(float(d["left"]), float(d["top"]), float(d["width"]),
                                       float(d["height"])), float(d["score"]), index, "image"))
    return dets


def _request_for(image, resolution: int) -> dict:
    return {"id": image.image_id, "image": image.path, "width": image.width,
            "height": image.height, "net_w": resolution, "net_h": resolution}


def _start_backend(backend: BackendSpec, resolution: int, warm: Sequence) -> BackendProcess:
    """Launch, handshake and warm up one backend process (warm-up is never timed)."""
    proc = BackendProcess(backend.argv(resolution))
    try:
        proc.handshake(backend.handshake_timeout_ms)
        for image in warm:
            try:
                proc.request(_request_for(image, resolution), backend.image_timeout_ms)
            except TimeoutError:
                log.warning("warm-up image %s timed out", image.image_id)
    except BaseException:
        proc.close(timeout=0.5)
        raise
    return proc


def run_resolution(resolution: int, dataset: DatasetIndex, backend: BackendSpec,
                   eval_config: EvalConfig = EvalConfig(), warmup: int = DEFAULT_WARMUP,
                   taxonomy: CategoryTaxonomy = VISDRONE) -> ResolutionResult:
    """Time and evaluate the backend at one resolution.

    Requests are strictly sequential.  A timed-out image is skipped and the
    backend is restarted (with a fresh warm-up), so a late answer can never
    overlap the next timed request.
    """
    result = ResolutionResult(resolution, "ok")
    images = list(dataset)
    warm = images[:max(warmup, 0)]
    proc = None
    try:
        proc = _start_backend(backend, resolution, warm)
        for image in images:
            try:
                msg, wall_ms = proc.request(_request_for(image, resolution), backend.image_timeout_ms)
            except TimeoutError:
                result.skipped += 1
                log.warning("image %s timed out at %d px; restarting backend", image.image_id, resolution)
                result.stale += proc.stale
                proc.close(timeout=0.5)
                proc = None
                result.restarts += 1
                proc = _start_backend(backend, resolution, warm)
                continue
            backend_ms = msg.get("latency_ms")
            result.samples.append(TimingSample(image.image_id, max(wall_ms, 1e-6), resolution,
                                               float(backend_ms) if backend_ms is not None else None))
            result.detections[image.image_id] = _parse_detections(msg.get("detections", ()), taxonomy)
    except (BackendError, OSError) as exc:
        result.status = "failed"
        result.error = str(exc)
        log.error("resolution %d failed: %s", resolution, exc)
        return result
    finally:
        if proc is not None:
            result.stale += proc.stale
            proc.close()

    # evaluation happens after the backend is gone, outside every timed span
    result.images = len(result.samples)
    if result.samples:
        result.timing = measure_fps(result.samples)
        backend_ms = [s.backend_latency_ms for s in result.samples if s.backend_latency_ms]
        if backend_ms:
            result.backend_timing = measure_fps(backend_ms)
    report = evaluate(dataset, result.detections, taxonomy, eval_config, f1=True,
                      method=f"{resolution}x{resolution}")
    result.report = report
    result.ap50 = report.AP50
    result.map = report.mAP
    at_report = [p for p in report.f1 if math.isclose(p.conf_threshold, 0.25)]
    if at_report:
        result.f1 = at_report[0].f1
    return result


def run_sweep(resolutions: Sequence[int], dataset: DatasetIndex, backend: BackendSpec,
              eval_config: EvalConfig = EvalConfig(), warmup: int = DEFAULT_WARMUP,
              taxonomy: CategoryTaxonomy = VISDRONE) -> SweepReport:
    """Evaluate and time the backend at each network resolution (ascending)."""
    for r in resolutions:
        if int(r) != r or r <= 0 or r % RESOLUTION_MULTIPLE:
            raise ValueError(f"resolution {r} is not a positive multiple of {RESOLUTION_MULTIPLE}")
    rows = [run_resolution(int(r), dataset, backend, eval_config, warmup, taxonomy)
            for r in sorted(set(resolutions))]
    return SweepReport(rows)


def select_checkpoint(series: Sequence[tuple[int, float, float]]) -> int:
    """Iteration with the best AP; ties go to higher F1, then the earlier iteration."""
    if not series:
        raise ValueError("empty checkpoint series")
    iterations = [int(s[0]) for s in series]
    if any(b <= a for a, b in zip(iterations, iterations[1:])):
        raise ValueError("checkpoint iterations must be strictly increasing")
    best = max(series, key=lambda s: (s[1], s[2], -s[0]))
    return int(best[0])


def read_series_csv(path) -> list[CheckpointResult]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in reader.fieldnames or ()]
        if fields[:3] != ["iteration", "ap", "f1"]:
            raise ValueError(f"{path}: header must be 'iteration,ap,f1', got {reader.fieldnames}")
        return [CheckpointResult(int(row[reader.fieldnames[0]]), float(row[reader.fieldnames[1]]),
                                 float(row[reader.fieldnames[2]])) for row in reader]


def read_timing_csv(path) -> list[TimingSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if "latency_ms" not in (reader.fieldnames or ()):
            raise ValueError(f"{path}: needs a latency_ms column")
        return [TimingSample(row.get("image_id", str(i)), float(row["latency_ms"]),
                             int(row["resolution"]) if row.get("resolution") else 0)
                for i, row in enumerate(reader)]


# ---------------------------------------------------------------- reports

def _pct(v: float) -> str:
    return "" if v is None or math.isnan(v) else f"{100.0 * v:.2f}"


def _num(v: Optional[float], digits: int = 3) -> str:
    return "" if v is None or math.isnan(v) else f"{v:.{digits}f}"


def _csv_text(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def eval_table_rows(reports: Sequence[EvalReport]) -> list[list[str]]:
    header = ["method", *EVAL_TABLE_COLUMNS[:3], *(f"AR{k}" for k in reports[0].config.max_dets)] \
        if reports else ["method", *EVAL_TABLE_COLUMNS]
    rows = [header]
    for rep in reports:
        metrics = rep.table_row()
        rows.append([rep.method] + [f"{metrics[c]:.2f}" if not math.isnan(metrics[c]) else ""
                                    for c in header[1:]])
    return rows


def _sweep_header(timing: bool) -> list[str]:
    cols = ["resolution", "status", "AP50", "mAP", "F1"]
    if timing:
        cols += ["mean_ms", "median_ms", "fps", "backend_mean_ms", "backend_fps"]
    return cols + ["images", "skipped"]


def _sweep_row(r: ResolutionResult, timing: bool) -> list[str]:
    row = [str(r.resolution), r.status, _pct(r.ap50), _pct(r.map), _pct(r.f1)]
    if timing:
        t, b = r.timing, r.backend_timing
        row += [_num(t.mean_ms) if t else "", _num(t.median_ms) if t else "",
                f"{t.fps:.3g}" if t else "", _num(b.mean_ms) if b else "", f"{b.fps:.3g}" if b else ""]
    return row + [str(r.images), str(r.skipped)]


def _sweep_dict(report: SweepReport, timing: bool) -> dict:
    rows = []
    for r in report.rows:
        d = dict(zip(_sweep_header(timing), _sweep_row(r, timing)))
        rows.append({k: _typed(v) for k, v in d.items()})
        if r.error:
            rows[-1]["error"] = r.error
    return {"resolutions": rows,
            "checkpoints": [{"iteration": c.iteration, "AP50": c.ap50,
                             "F1": c.f1} for c in report.checkpoints]}


def _typed(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def emit_report(report: EvalReport | SweepReport | Sequence[EvalReport], fmt: str = "csv",
                path=None, timing: bool = True) -> str:
    """Serialise a report deterministically; also writes ``path`` if given.

    Percentages carry two decimals.  ``timing=False`` leaves out the latency
    columns of a sweep, which are the only run-to-run varying fields.
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    if isinstance(report, SweepReport):
        if fmt == "json":
            text = json.dumps(_sweep_dict(report, timing), indent=2) + "\n"
        else:
            rows = [_sweep_header(timing)] + [_sweep_row(r, timing) for r in report.rows]
            text = _csv_text(rows)
            if report.checkpoints:
                text += "\n" + _csv_text([["iteration", "AP50", "F1"]] + [
                    [str(c.iteration), f"{c.ap50:.2f}", f"{c.f1:.2f}"] for c in report.checkpoints])
    else:
        reports = [report] if isinstance(report, EvalReport) else list(report)
        if fmt == "json":
            payload = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
            text = json.dumps(payload, indent=2) + "\n"
        else:
            text = _csv_text(eval_table_rows(reports))
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def parse_report_csv(text: str) -> list[list[dict]]:
    """Parse emitted CSV back into blocks of typed row dicts."""
    blocks, current = [], []
    for chunk in text.split("\n\n"):
        if not chunk.strip():
            continue
        reader = csv.DictReader(io.StringIO(chunk))
        current = [{k: _typed(v) for k, v in row.items()} for row in reader]
        blocks.append(current)
    return blocks


def table_json_to_csv(json_text: str) -> str:
    """Metric-row CSV from an emitted evaluation JSON."""
    payload = json.loads(json_text)
    items = payload if isinstance(payload, list) else [payload]
    header = ["method", *items[0]["metrics"].keys()]
    return _csv_text([header] + [[it["method"], *(f"{v:.2f}" for v in it["metrics"].values())]
                                 for it in items])


def table_csv_to_json(csv_text: str) -> str:
    rows = parse_report_csv(csv_text)[0]
    items = [{"method": r["method"], "metrics": {k: v for k, v in r.items() if k != "method"}}
             for r in rows]
    return json.dumps(items[0] if len(items) == 1 else items, indent=2) + "\n"
