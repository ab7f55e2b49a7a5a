"""Per-view feature grids for the fusion regressor.

The built-in featurizer turns one frame's pod detections into a 3-channel
heatmap; external feature maps can be loaded from the grid file format:

    binary: b"PFGRID1\\n", then uint32 C, H, W, N (little endian),
            then N little-endian float32 values in channel-major order
    text:   "PFGRID-TEXT C H W N" on the first line, then N values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Detection
from .errors import MalformedHeader, NonFiniteValue, ShapeMismatch, UnscoredDetection

MAGIC = b"PFGRID1\n"
TEXT_MAGIC = "PFGRID-TEXT"
_HEADER = struct.Struct("<4I")

DEFAULT_GRID = (16, 16)
COUNT, CONFIDENCE, AREA = 0, 1, 2


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    data: np.ndarray  # float32, shape (C, H, W)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ShapeMismatch(f"feature grid must be 3-D (C, H, W), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("feature grid contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, FeatureGrid):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)


def detection_heatmap(
    detections: Sequence[Detection],
    image_size: tuple[float, float],
    grid_size: tuple[int, int] = DEFAULT_GRID,
) -> FeatureGrid:
    """Bin scored detections by centroid into a 3-channel grid.

    Channels: detection count per cell, mean confidence of occupied cells,
    mean box area (as a fraction of the image) of occupied cells.  Centroids
    outside the image are clamped to the border cells.
    """
    img_w, img_h = image_size
    gw, gh = grid_size
    if img_w <= 0 or img_h <= 0 or gw <= 0 or gh <= 0:
        raise ValueError("image and grid sizes must be positive")
    grid = np.zeros((3, gh, gw))
    if not detections:
        return FeatureGrid(grid)
    for i, d in enumerate(detections):
        if d.score is None:
            raise UnscoredDetection(f"detection {i} has no confidence score")

    boxes = np.array([d.box.as_tuple() for d in detections], dtype=float)
    scores = np.array([d.score for d in detections], dtype=float)
    cx = boxes[:, 0] + boxes[:, 2] / 2
    cy = boxes[:, 1] + boxes[:, 3] / 2
    col = np.clip(np.floor(cx * gw / img_w), 0, gw - 1).astype(np.intp)
    row = np.clip(np.floor(cy * gh / img_h), 0, gh - 1).astype(np.intp)
    flat = row * gw + col
    area = boxes[:, 2] * boxes[:, 3] / (img_w * img_h)

    counts = np.bincount(flat, minlength=gh * gw).astype(float)
    conf_sum = np.bincount(flat, weights=scores, minlength=gh * gw)
    area_sum = np.bincount(flat, weights=area, minlength=gh * gw)
    occupied = counts > 0
    conf = np.zeros_like(counts)
    mean_area = np.zeros_like(counts)
    conf[occupied] = conf_sum[occupied] / counts[occupied]
    mean_area[occupied] = area_sum[occupied] / counts[occupied]
    grid[COUNT] = counts.reshape(gh, gw)
    grid[CONFIDENCE] = np.minimum(conf, 1.0).reshape(gh, gw)
    grid[AREA] = mean_area.reshape(gh, gw)
    return FeatureGrid(grid)


def save_feature_grid(grid: FeatureGrid, path: str | Path, text: bool = False) -> None:
    c, h, w = grid.shape
    n = c * h * w
    path = Path(path)
    if text:
        values = "\n".join(format(float(v), ".9g") for v in grid.data.ravel())
        path.write_text(f"{TEXT_MAGIC} {c} {h} {w} {n}\n{values}\n")
    else:
        path.write_bytes(MAGIC + _HEADER.pack(c, h, w, n) + grid.data.astype("<f4").tobytes())


def _check_shape(c: int, h: int, w: int, n: int, found: int) -> None:
    if c * h * w != n:
        raise ShapeMismatch(f"header shape {c}x{h}x{w} disagrees with element count {n}")
    if found != n:
        raise ShapeMismatch(f"header declares {c}x{h}x{w} ({n} values) but {found} follow")


def load_feature_grid(path: str | Path) -> FeatureGrid:
    raw = Path(path).read_bytes()
    if raw.startswith(MAGIC):
        body = raw[len(MAGIC):]
        if len(body) < _HEADER.size:
            raise MalformedHeader(f"{path}: truncated header")
        c, h, w, n = _HEADER.unpack_from(body)
        payload = body[_HEADER.size:]
        if len(payload) % 4:
            raise ShapeMismatch(f"{path}: payload is not a whole number of float32 values")
        _check_shape(c, h, w, n, len(payload) // 4)
        data = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    elif raw.startswith(TEXT_MAGIC.encode()):
        first, _, rest = raw.decode("ascii", errors="replace").partition("\n")
        parts = first.split()
        try:
            c, h, w, n = (int(p) for p in parts[1:5])
        except ValueError as exc:
            raise MalformedHeader(f"{path}: bad text header {first!r}") from exc
        if len(parts) != 5:
            raise MalformedHeader(f"{path}: bad text header {first!r}")
        tokens = rest.split()
        _check_shape(c, h, w, n, len(tokens))
        try:
            data = np.array([float(t) for t in tokens], dtype=np.float32)
        except ValueError as exc:
            raise NonFiniteValue(f"{path}: unparseable value ({exc})") from exc
    else:
        raise MalformedHeader(f"{path}: unrecognised feature-grid magic")
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{path}: non-finite value in feature grid")
    return FeatureGrid(data.reshape(c, h, w))
