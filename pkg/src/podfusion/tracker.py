"""Centroid plot tracker.

Each frame's plot boxes are reduced to centroids and matched to live tracks
by Euclidean distance.  Matching is globally greedy: all (track, detection)
pairs within ``max_match_distance`` are sorted by distance (ties by track id,
then detection index) and consumed in that order.  Unmatched detections open
new tracks; a track that goes unmatched for ``expiry_frames`` consecutive
steps is removed and its id is never reused.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .data import FrameRecord
from .errors import InvalidConfig, NonMonotonicFrame
from .geometry import BoundingBox, Point2, centroid, euclidean


@dataclass(frozen=True)
class TrackerConfig:
    expiry_frames: int = 5
    max_match_distance: float = math.inf

    def __post_init__(self):
        if self.expiry_frames < 1:
            raise InvalidConfig("expiry_frames must be >= 1")
        if not self.max_match_distance > 0:
            raise InvalidConfig("max_match_distance must be > 0")


@dataclass
class Track:
    id: int
    last_centroid: Point2
    first_frame: int
    last_seen_frame: int
    missed_frames: int = 0
    centroid_history: list[tuple[int, Point2]] = field(default_factory=list)
    expired_frame: int | None = None

    @property
    def n_observations(self) -> int:
        return len(self.centroid_history)

    def snapshot(self) -> "Track":
        return Track(self.id, self.last_centroid, self.first_frame, self.last_seen_frame,
                     self.missed_frames, list(self.centroid_history), self.expired_frame)


@dataclass(frozen=True)
class FrameAssignment:
    frame_id: int
    assignments: tuple[tuple[int, int], ...]  # (detection index, track id), by detection index
    new_ids: tuple[int, ...]
    expired_ids: tuple[int, ...]


def greedy_pairs(
    tracks: Sequence[Point2], detections: Sequence[Point2], max_distance: float = math.inf
) -> list[tuple[int, int]]:
    """Globally greedy (track index, detection index) matching by distance."""
    pairs = []
    for ti, t in enumerate(tracks):
        for di, d in enumerate(detections):
            dist = euclidean(t, d)
            if dist <= max_distance:
                pairs.append((dist, ti, di))
    pairs.sort()
    used_t, used_d, out = set(), set(), []
    for _, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        out.append((ti, di))
    return out


class CentroidTracker:
    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self._active: dict[int, Track] = {}
        self._expired: list[Track] = []
        self._next_id = 0
        self._last_frame: int | None = None

    def step(self, frame_id: int, detections: Sequence[BoundingBox]) -> FrameAssignment:
        if self._last_frame is not None and frame_id <= self._last_frame:
            raise NonMonotonicFrame(f"frame {frame_id} does not follow frame {self._last_frame}")
        self._last_frame = frame_id

        points = [centroid(b) for b in detections]
        ids = sorted(self._active)
        matches = greedy_pairs([self._active[i].last_centroid for i in ids], points,
                               self.config.max_match_distance)

        assigned: dict[int, int] = {}
        for ti, di in matches:
            track = self._active[ids[ti]]
            track.last_centroid = points[di]
            track.last_seen_frame = frame_id
            track.missed_frames = 0
            track.centroid_history.append((frame_id, points[di]))
            assigned[di] = track.id

        matched_ids = set(assigned.values())
        expired = []
        for tid in ids:
            if tid in matched_ids:
                continue
            track = self._active[tid]
            track.missed_frames += 1
            if track.missed_frames >= self.config.expiry_frames:
                track.expired_frame = frame_id
                del self._active[tid]
                self._expired.append(track)
                expired.append(tid)

        new_ids = []
        for di, p in enumerate(points):
            if di in assigned:
                continue
            tid = self._next_id
            self._next_id += 1
            self._active[tid] = Track(tid, p, frame_id, frame_id, 0, [(frame_id, p)])
            assigned[di] = tid
            new_ids.append(tid)

        return FrameAssignment(frame_id, tuple(sorted(assigned.items())), tuple(new_ids), tuple(expired))

    def active_tracks(self) -> list[Track]:
        return [self._active[i].snapshot() for i in sorted(self._active)]

    def all_tracks(self) -> list[Track]:
        """Active and expired tracks, sorted by id."""
        tracks = [t.snapshot() for t in self._expired] + self.active_tracks()
        return sorted(tracks, key=lambda t: t.id)


def run_sequence(
    frames: Sequence[FrameRecord], config: TrackerConfig | None = None, label: str | None = None
) -> tuple[list[FrameAssignment], list[Track]]:
    """Fold :meth:`CentroidTracker.step` over a frame sequence.

    Returns the per-frame assignments and the final table of every track
    (active and expired).  ``label`` keeps only detections of that class.
    """
    tracker = CentroidTracker(config)
    out = []
    for rec in frames:
        dets = [d.box for d in rec.detections if label is None or d.class_label == label]
        out.append(tracker.step(rec.frame_id, dets))
    return out, tracker.all_tracks()


def format_assignments(assignments: Sequence[FrameAssignment]) -> str:
    lines = []
    for fa in assignments:
        for di, tid in fa.assignments:
            lines.append(json.dumps({"frame_id": fa.frame_id, "detection_index": di, "track_id": tid},
                                    separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def format_track_table(tracks: Sequence[Track]) -> str:
    lines = ["track_id,first_frame,last_seen_frame,n_observations"]
    for t in tracks:
        lines.append(f"{t.id},{t.first_frame},{t.last_seen_frame},{t.n_observations}")
    return "\n".join(lines) + "\n"


def read_track_table(fh) -> list[tuple[int, int, int, int]]:
    rows = []
    for row in csv.DictReader(line for line in fh if not line.startswith("#")):
        rows.append((int(row["track_id"]), int(row["first_frame"]), int(row["last_seen_frame"]),
                     int(row["n_observations"])))
    return rows
