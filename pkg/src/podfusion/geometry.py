"""Axis-aligned box primitives.

Boxes use the VIA region convention: ``(x, y, w, h)`` with ``(x, y)`` the
top-left corner, in continuous pixel coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidBox


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidBox(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        # a finite sum implies finite fields; check them one by one otherwise
        if not math.isfinite(self.x + self.y + self.w + self.h) and \
                not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise InvalidBox(f"non-finite box {self.as_tuple()}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBox(f"box must have positive width and height, got {self.as_tuple()}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 for disjoint boxes."""
    if a == b:
        # corner arithmetic can round ix*iy away from w*h
        return 1.0
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return min(1.0, inter / union)


def centroid(b: BoundingBox) -> Point2:
    return Point2(b.x + b.w / 2, b.y + b.h / 2)


def euclidean(p: Point2, q: Point2) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float array of ``x, y, w, h``."""
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.as_tuple() for b in boxes], dtype=float)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` arrays of xywh boxes."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.minimum(ax2, bx2)
    iw -= np.maximum(ax1, bx1)
    np.maximum(iw, 0.0, out=iw)
    ih = np.minimum(ay2, by2)
    ih -= np.maximum(ay1, by1)
    np.maximum(ih, 0.0, out=ih)
    inter = iw * ih
    union = (a[:, 2:3] * a[:, 3:4]) + (b[:, 2] * b[:, 3]) - inter
    out = np.divide(inter, union, out=np.zeros_like(inter), where=inter > 0)
    np.minimum(out, 1.0, out=out)
    # identical boxes can round just below 1; only near-1 entries need the check
    i, j = np.nonzero(out > 1.0 - 1e-9)
    same = (a[i] == b[j]).all(axis=1)
    out[i[same], j[same]] = 1.0
    return out


def iou_pairs(a: np.ndarray, b: np.ndarray, min_iou: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sparse IoU: ``(i, j, iou)`` for every pair with ``iou >= min_iou > 0``.

    Boxes in ``b`` are swept by left edge so only pairs whose x-extents can
    overlap are evaluated.  Values equal the matching ``iou_matrix`` entries.
    """
    if not min_iou > 0:
        raise ValueError("iou_pairs needs a positive min_iou")
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        empty = np.zeros(0, dtype=np.intp)
        return empty, empty, np.zeros(0)
    order = np.argsort(b[:, 0], kind="stable")
    left = b[order, 0]
    lo = np.searchsorted(left, a[:, 0] - b[:, 2].max(), "left")
    hi = np.searchsorted(left, a[:, 0] + a[:, 2], "left")
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    i = np.repeat(np.arange(len(a)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    j = order[np.repeat(lo, counts) + offsets]
    pa, pb = a[i], b[j]
    iw = np.maximum(np.minimum(pa[:, 0] + pa[:, 2], pb[:, 0] + pb[:, 2]) - np.maximum(pa[:, 0], pb[:, 0]), 0.0)
    ih = np.maximum(np.minimum(pa[:, 1] + pa[:, 3], pb[:, 1] + pb[:, 3]) - np.maximum(pa[:, 1], pb[:, 1]), 0.0)
    inter = iw * ih
    union = (pa[:, 2] * pa[:, 3]) + (pb[:, 2] * pb[:, 3]) - inter
    v = np.divide(inter, union, out=np.zeros_like(inter), where=inter > 0)
    np.minimum(v, 1.0, out=v)
    v[(pa == pb).all(axis=1)] = 1.0
    keep = v >= min_iou
    return i[keep], j[keep], v[keep]
