"""Darknet-style ``.cfg`` documents and training-setup arithmetic.

Parsing is lossless: every byte of the input (comments, blank lines, spacing,
CRLF endings) is kept, so ``render_cfg(parse_cfg(text)) == text``.  Edits
rewrite only the lines they touch.
"""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

NET_SECTIONS = ("net", "network")
RESOLUTION_MULTIPLE = 32
DEFAULT_BURN_IN_POWER = 4.0

_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]\s*$")


class CfgError(ValueError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


@dataclass
class Line:
    """One physical line.  ``raw`` includes its line terminator, if any."""

    raw: str
    key: Optional[str] = None

    @property
    def content(self) -> str:
        return self.raw.rstrip("\n").rstrip("\r")

    @property
    def eol(self) -> str:
        return self.raw[len(self.content):]

    @property
    def value(self) -> Optional[str]:
        if self.key is None:
            return None
        return self.content.split("=", 1)[1].strip()


@dataclass
class Section:
    name: str
    header: Line
    lines: list[Line] = field(default_factory=list)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for line in self.lines:
            if line.key == key:
                return line.value
        return default

    def keys(self) -> list[str]:
        return [l.key for l in self.lines if l.key is not None]

    def items(self) -> list[tuple[str, str]]:
        return [(l.key, l.value) for l in self.lines if l.key is not None]


@dataclass
class CfgDocument:
    preamble: list[Line]
    sections: list[Section]

    @property
    def net(self) -> Section:
        if not self.sections or self.sections[0].name not in NET_SECTIONS:
            raise CfgError("document has no leading [net] section")
        return self.sections[0]

    @property
    def layers(self) -> list[Section]:
        """Every section after the network header, i.e. darknet's layer list."""
        return self.sections[1:]

    def find(self, name: str) -> Iterator[tuple[int, Section]]:
        for i, section in enumerate(self.sections):
            if section.name == name:
                yield i, section

    def copy(self) -> "CfgDocument":
        return copy.deepcopy(self)

    def with_value(self, section_index: int, key: str, value) -> "CfgDocument":
        """Return a copy where ``key`` in one section is set to ``value``.

        An existing key keeps its spacing around ``=``; a missing key is
        appended after the section's last key line.
        """
        doc = self.copy()
        section = doc.sections[section_index]
        value = str(value)
        for line in section.lines:
            if line.key == key:
                head = line.content.split("=", 1)[0]
                after = line.content.split("=", 1)[1]
                lead = after[:len(after) - len(after.lstrip())]
                line.raw = f"{head}={lead}{value}{line.eol}"
                return doc
        eol = _default_eol(doc)
        key_rows = [i for i, l in enumerate(section.lines) if l.key is not None]
        at = key_rows[-1] + 1 if key_rows else 0
        if at > 0 and not section.lines[at - 1].eol:
            section.lines[at - 1].raw += eol
        elif at == 0 and not section.header.eol:
            section.header.raw += eol
        section.lines.insert(at, Line(f"{key}={value}{eol}", key))
        return doc


def _default_eol(doc: CfgDocument) -> str:
    for line in _all_lines(doc):
        if line.eol:
            return line.eol
    return "\n"


def _all_lines(doc: CfgDocument) -> Iterator[Line]:
    yield from doc.preamble
    for section in doc.sections:
        yield section.header
        yield from section.lines


def _split_lines(text: str) -> list[str]:
    parts = text.split("\n")
    lines = [p + "\n" for p in parts[:-1]]
    if parts[-1]:
        lines.append(parts[-1])
    return lines


def _is_opaque(content: str) -> bool:
    stripped = content.strip()
    return not stripped or stripped[0] in "#;"


def parse_cfg(text: str) -> CfgDocument:
    preamble: list[Line] = []
    sections: list[Section] = []
    for line_no, raw in enumerate(_split_lines(text), start=1):
        line = Line(raw)
        content = line.content
        if _is_opaque(content):
            (sections[-1].lines if sections else preamble).append(line)
            continue
        m = _SECTION_RE.match(content)
        if m:
            sections.append(Section(m.group(1).strip(), line))
            continue
        if "=" not in content:
            raise CfgError(f"expected 'key=value', got {content.strip()!r}", line_no)
        if not sections:
            raise CfgError("key=value outside any section", line_no)
        line.key = content.split("=", 1)[0].strip()
        sections[-1].lines.append(line)
    if sections and sections[0].name not in NET_SECTIONS:
        raise CfgError(f"first section must be [net], got [{sections[0].name}]")
    return CfgDocument(preamble, sections)


def render_cfg(doc: CfgDocument) -> str:
    return "".join(line.raw for line in _all_lines(doc))


def read_cfg(path) -> CfgDocument:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_cfg(fh.read())


def write_cfg(path, doc: CfgDocument) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_cfg(doc))


def set_net_resolution(doc: CfgDocument, width: int, height: int) -> CfgDocument:
    for name, v in (("width", width), ("height", height)):
        if int(v) != v or v <= 0 or v % RESOLUTION_MULTIPLE:
            raise CfgError(f"network {name} must be a positive multiple of "
                           f"{RESOLUTION_MULTIPLE} (the deepest head's stride), got {v}")
    doc.net  # raises without a [net] section
    return doc.with_value(0, "width", int(width)).with_value(0, "height", int(height))


def yolo_masks(section: Section) -> int:
    mask = section.get("mask")
    if mask:
        return len([m for m in mask.split(",") if m.strip()])
    return int(section.get("num", "1"))


def set_num_classes(doc: CfgDocument, num_classes: int) -> CfgDocument:
    """Set ``classes`` on every [yolo] layer and resize the conv feeding it."""
    if num_classes <= 0:
        raise CfgError("class count must be positive")
    out = doc
    for i, section in list(doc.find("yolo")):
        out = out.with_value(i, "classes", num_classes)
        for j in range(i - 1, 0, -1):
            if doc.sections[j].name == "convolutional":
                out = out.with_value(j, "filters", (num_classes + 5) * yolo_masks(section))
                break
    return out


@dataclass(frozen=True)
class TrainSchedule:
    learning_rate: float
    burn_in: int
    power: float = DEFAULT_BURN_IN_POWER
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch: int = 64
    subdivisions: int = 1
    max_iterations: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.batch <= 0 or self.subdivisions <= 0 or self.batch % self.subdivisions:
            raise ValueError(f"batch {self.batch} must be a positive multiple of subdivisions {self.subdivisions}")
        if self.learning_rate <= 0 or self.momentum <= 0 or self.weight_decay <= 0 or self.power <= 0:
            raise ValueError("learning rate, momentum, decay and power must be positive")

    @property
    def mini_batch(self) -> int:
        return self.batch // self.subdivisions


def schedule_from_cfg(doc: CfgDocument) -> TrainSchedule:
    net = doc.net
    random_flags = [s.get("random") for _, s in doc.find("yolo") if s.get("random") is not None]
    for flag in random_flags:
        if flag not in ("0", "1") and not _is_float(flag):
            raise CfgError(f"[yolo] random must be numeric, got {flag!r}")
    return TrainSchedule(
        learning_rate=float(net.get("learning_rate", "0.001")),
        burn_in=int(net.get("burn_in", "0")),
        power=float(net.get("power", str(DEFAULT_BURN_IN_POWER))),
        momentum=float(net.get("momentum", "0.9")),
        weight_decay=float(net.get("decay", "0.0001")),
        batch=int(net.get("batch", "1")),
        subdivisions=int(net.get("subdivisions", "1")),
        max_iterations=int(net.get("max_batches", "0")),
    )


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def iterations_per_epoch(num_images: int, batch: int) -> int:
    """``num_images / batch`` rounded half-up, in exact integer arithmetic."""
    if num_images <= 0 or batch <= 0:
        raise ValueError("image count and batch must be positive")
    return (2 * num_images + batch) // (2 * batch)


def lr_at(iteration: int, schedule: TrainSchedule) -> float:
    """Learning rate during burn-in ramp and the plateau after it."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if iteration < schedule.burn_in:
        return schedule.learning_rate * (iteration / schedule.burn_in) ** schedule.power
    return schedule.learning_rate


def lr_table(schedule: TrainSchedule, iterations: int, step: int = 100) -> list[tuple[int, float]]:
    points = list(range(0, iterations + 1, step))
    if schedule.burn_in and schedule.burn_in <= iterations and schedule.burn_in not in points:
        points.append(schedule.burn_in)
    return [(i, lr_at(i, schedule)) for i in sorted(points)]


@dataclass(frozen=True)
class TransferPlan:
    cut_layer: int
    counting: str
    layer_kinds: tuple[str, ...]
    load: tuple[int, ...]  # layer indices receiving pre-trained weights
    initialize: tuple[int, ...]
    cut_section_index: Optional[int]  # document section where fresh layers start
    conv_total: int
    conv_loaded: int

    @property
    def num_load(self) -> int:
        return len(self.load)

    @property
    def num_initialize(self) -> int:
        return len(self.initialize)

    @property
    def conv_initialized(self) -> int:
        return self.conv_total - self.conv_loaded

    def summary(self) -> dict:
        return {
            "cut_layer": self.cut_layer,
            "counting": self.counting,
            "layers_total": len(self.layer_kinds),
            "layers_load": self.num_load,
            "layers_initialize": self.num_initialize,
            "conv_total": self.conv_total,
            "conv_load": self.conv_loaded,
            "conv_initialize": self.conv_initialized,
            "cut_section_index": self.cut_section_index,
            "last_loaded_layer": self.load[-1] if self.load else None,
            "last_loaded_kind": self.layer_kinds[self.load[-1]] if self.load else None,
        }


def transfer_plan(doc: CfgDocument, cut_layer: int, counting: str = "layers") -> TransferPlan:
    """Split the layer list at ``cut_layer`` into pre-trained vs fresh layers.

    ``counting="layers"`` indexes every layer record, the way darknet's
    partial-weights cut does; ``counting="conv"`` counts convolutional layers
    only.  Both countings are reported in the result either way.
    """
    kinds = tuple(s.name for s in doc.layers)
    conv_positions = [i for i, k in enumerate(kinds) if k == "convolutional"]
    if counting not in ("layers", "conv"):
        raise ValueError("counting must be 'layers' or 'conv'")
    total = len(kinds) if counting == "layers" else len(conv_positions)
    if cut_layer < 0 or cut_layer > total:
        unit = "layers" if counting == "layers" else "convolutional layers"
        raise CfgError(f"cut {cut_layer} beyond the {total} {unit} in the document")
    if counting == "layers":
        boundary = cut_layer
    else:
        boundary = conv_positions[cut_layer - 1] + 1 if cut_layer else 0
    load = tuple(range(boundary))
    init = tuple(range(boundary, len(kinds)))
    conv_loaded = sum(1 for i in conv_positions if i < boundary)
    cut_section = boundary + 1 if boundary < len(kinds) else None
    return TransferPlan(cut_layer, counting, kinds, load, init, cut_section,
                        len(conv_positions), conv_loaded)
