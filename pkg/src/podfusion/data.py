"""Dataset containers, file ingestion and descriptive statistics.

Three on-disk formats live here:

* detections stream: JSON lines, one frame per line,
  ``{"frame_id": 3, "detections": [{"x":..,"y":..,"w":..,"h":..,"score":..,"label":"Pod"}]}``
  (``score`` omitted for ground truth);
* plot metadata: CSV with header ``plot_id,side,frame_start,frame_end,ground_truth_pods``;
* annotations: VIA-style JSON, ``{image_id: {"filename":..,"regions":[{"shape_attributes":
  {"name":"rect","x":..,"y":..,"width":..,"height":..},"region_attributes":{"label":"Pod"}}]}}``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import re
import statistics
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

from .errors import (
    DataError,
    DuplicateFrame,
    EmptyDataset,
    InvalidBox,
    MalformedDocument,
    MalformedLine,
    MissingField,
)
from .geometry import BoundingBox

log = logging.getLogger(__name__)

POD = "Pod"
PLOT = "Plot"


class Side(str, enum.Enum):
    A = "A"
    B = "B"
    FRONT = "FRONT"
    LEFT = "LEFT"
    RIGHT = "RIGHT"


@dataclass(frozen=True, slots=True)
class Detection:
    box: BoundingBox
    score: float | None = None
    class_label: str = POD

    def __post_init__(self):
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise DataError(f"detection score {self.score} outside [0, 1]")

    @property
    def scored(self) -> bool:
        return self.score is not None


@dataclass(frozen=True, slots=True)
class FrameRecord:
    frame_id: int
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.frame_id < 0:
            raise DataError(f"negative frame_id {self.frame_id}")
        if not isinstance(self.detections, tuple):
            object.__setattr__(self, "detections", tuple(self.detections))

    def with_label(self, label: str) -> "FrameRecord":
        return FrameRecord(self.frame_id, tuple(d for d in self.detections if d.class_label == label))


@dataclass(frozen=True, slots=True)
class PlotMeta:
    plot_id: str
    side: Side
    frame_start: int
    frame_end: int
    ground_truth_pods: int

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if self.frame_start > self.frame_end:
            raise DataError(f"plot {self.plot_id}: frame_start {self.frame_start} > frame_end {self.frame_end}")
        if self.ground_truth_pods < 0:
            raise DataError(f"plot {self.plot_id}: negative pod count")


@dataclass(frozen=True)
class DatasetStats:
    n: int
    min: float
    max: float
    mean: float
    std_sample: float
    std_population: float


class Annotations(dict):
    """Image id -> list of :class:`Detection`, plus the count of skipped regions."""

    def __init__(self, *args, skipped: int = 0, **kwargs):
        super().__init__(*args, **kwargs)
        self.skipped = skipped


# -- annotations -------------------------------------------------------------

_RECT_FIELDS = ("x", "y", "width", "height")


def parse_annotations(text: str) -> Annotations:
    """Parse a VIA-region document into image id -> detections.

    Accepts either the bare image mapping or a VIA project file carrying it
    under ``_via_img_metadata``.  Non-rectangle regions are skipped and
    counted in ``result.skipped``.
    """
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"annotation document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("annotation document must be a JSON object")
    if "_via_img_metadata" in doc:
        doc = doc["_via_img_metadata"]

    out = Annotations()
    for image_id, entry in doc.items():
        if not isinstance(entry, dict):
            raise MalformedDocument(f"image entry {image_id!r} is not an object")
        regions = entry.get("regions", [])
        if isinstance(regions, dict):  # VIA 1.x stored regions keyed by index
            regions = list(regions.values())
        dets = []
        for idx, region in enumerate(regions):
            shape = region.get("shape_attributes", {}) if isinstance(region, dict) else {}
            if shape.get("name", "rect") != "rect":
                out.skipped += 1
                continue
            missing = [k for k in _RECT_FIELDS if k not in shape]
            if missing:
                raise MissingField(f"{image_id} region {idx}: missing {', '.join(missing)}")
            label = (region.get("region_attributes") or {}).get("label", POD)
            try:
                box = BoundingBox(*(float(shape[k]) for k in _RECT_FIELDS))
            except (InvalidBox, TypeError, ValueError) as exc:
                raise MissingField(f"{image_id} region {idx}: invalid rectangle ({exc})") from exc
            dets.append(Detection(box, None, label))
        out[image_id] = dets
    if out.skipped:
        log.warning("skipped %d non-rectangle regions", out.skipped)
    return out


def dump_annotations(images: dict[str, Sequence[Detection]]) -> str:
    doc = {}
    for image_id, dets in images.items():
        doc[image_id] = {
            "filename": image_id,
            "regions": [
                {
                    "shape_attributes": {
                        "name": "rect",
                        "x": d.box.x,
                        "y": d.box.y,
                        "width": d.box.w,
                        "height": d.box.h,
                    },
                    "region_attributes": {"label": d.class_label},
                }
                for d in dets
            ],
        }
    return json.dumps(doc, indent=1)


# -- detection streams -------------------------------------------------------

_FRAME_ID_RE = re.compile(r'^\s*\{\s*"frame_id"\s*:\s*(\d+)')


def _detection_from_obj(obj: dict) -> Detection:
    box = BoundingBox(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))
    score = obj.get("score")
    return Detection(box, None if score is None else float(score), obj.get("label", POD))


def _parse_line(line: str, line_no: int) -> FrameRecord:
    try:
        obj = json.loads(line)
        frame_id = obj["frame_id"]
        if not isinstance(frame_id, int) or isinstance(frame_id, bool):
            raise TypeError("frame_id must be an integer")
        dets = tuple(_detection_from_obj(d) for d in obj.get("detections", []))
        return FrameRecord(frame_id, dets)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedLine(line_no, str(exc)) from exc


def iter_detections(
    stream: Iterable[str], frames: set[int] | None = None, label: str | None = None
) -> Iterator[FrameRecord]:
    """Yield frame records in file order without loading the whole stream.

    ``frames`` restricts decoding to the given frame ids (other lines are
    skipped after a cheap prefix check); ``label`` keeps only detections of
    that class.
    """
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        if frames is not None:
            m = _FRAME_ID_RE.match(line)
            if m and int(m.group(1)) not in frames:
                continue
        rec = _parse_line(line, line_no)
        if frames is not None and rec.frame_id not in frames:
            continue
        yield rec.with_label(label) if label is not None else rec


def parse_detections(stream: Iterable[str], label: str | None = None) -> list[FrameRecord]:
    """Parse a whole detections stream, sorted by frame id."""
    records = {}
    for rec in iter_detections(stream, label=label):
        if rec.frame_id in records:
            raise DuplicateFrame(rec.frame_id)
        records[rec.frame_id] = rec
    return [records[k] for k in sorted(records)]


def _detection_obj(d: Detection) -> dict:
    obj = {"x": d.box.x, "y": d.box.y, "w": d.box.w, "h": d.box.h}
    if d.score is not None:
        obj["score"] = d.score
    obj["label"] = d.class_label
    return obj


def format_frame(rec: FrameRecord) -> str:
    return json.dumps(
        {"frame_id": rec.frame_id, "detections": [_detection_obj(d) for d in rec.detections]},
        separators=(",", ":"),
    )


def write_detections(records: Iterable[FrameRecord], fh: IO[str]) -> None:
    for rec in records:
        fh.write(format_frame(rec))
        fh.write("\n")


def dump_detections(records: Iterable[FrameRecord]) -> str:
    buf = io.StringIO()
    write_detections(records, buf)
    return buf.getvalue()


# -- plot metadata -----------------------------------------------------------

META_COLUMNS = ("plot_id", "side", "frame_start", "frame_end", "ground_truth_pods")


def read_plot_meta(fh: IO[str]) -> list[PlotMeta]:
    reader = csv.DictReader(_skip_comments(fh))
    if reader.fieldnames is None:
        return []
    missing = [c for c in META_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise MalformedDocument(f"plot metadata missing columns: {', '.join(missing)}")
    rows = []
    for i, row in enumerate(reader, start=2):
        try:
            rows.append(
                PlotMeta(
                    row["plot_id"],
                    Side(row["side"]),
                    int(row["frame_start"]),
                    int(row["frame_end"]),
                    int(row["ground_truth_pods"]),
                )
            )
        except ValueError as exc:
            raise MalformedLine(i, str(exc)) from exc
    return rows


def write_plot_meta(rows: Iterable[PlotMeta], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(META_COLUMNS)
    for r in rows:
        w.writerow([r.plot_id, r.side.value, r.frame_start, r.frame_end, r.ground_truth_pods])


def _skip_comments(fh: Iterable[str]) -> Iterator[str]:
    for line in fh:
        if not line.startswith("#"):
            yield line


def read_counts(fh: IO[str]) -> list[int]:
    """Read pod counts from a one-per-line file or a CSV with ``ground_truth_pods``.

    Plot metadata lists each plot once per pass side; with a ``plot_id``
    column only the first row of each plot is counted.
    """
    lines = [ln.strip() for ln in _skip_comments(fh) if ln.strip()]
    if not lines:
        return []
    if "ground_truth_pods" in lines[0].split(","):
        reader = csv.DictReader(lines)
        seen, out = set(), []
        for row in reader:
            pid = row.get("plot_id")
            if pid is not None:
                if pid in seen:
                    continue
                seen.add(pid)
            out.append(int(row["ground_truth_pods"]))
        return out
    try:
        return [int(float(ln)) for ln in lines]
    except ValueError as exc:
        raise MalformedDocument(f"counts file: {exc}") from exc


# -- statistics --------------------------------------------------------------

def dataset_stats(counts: Sequence[float]) -> DatasetStats:
    """Min/max/mean and both standard-deviation conventions of pod counts.

    ``std_sample`` uses the ``n - 1`` denominator and is reported as 0.0 for a
    single observation.
    """
    values = list(counts)
    if not values:
        raise EmptyDataset("dataset_stats needs at least one count")
    if any(v < 0 or not math.isfinite(v) for v in values):
        raise DataError("pod counts must be finite and nonnegative")
    mean = statistics.fmean(values)
    n = len(values)
    return DatasetStats(
        n=n,
        min=min(values),
        max=max(values),
        mean=mean,
        std_sample=statistics.stdev(values) if n > 1 else 0.0,
        std_population=statistics.pstdev(values),
    )
