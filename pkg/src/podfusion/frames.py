"""Pick the frames of each plot pass that feed the fusion regressor.

Frames are taken at evenly spaced interior positions of the plot's frame
interval, rounding half up.  Augmented samples shift the picks by
``+shift, -shift, +2*shift, ...`` (clamped to the interval), echoing the
practice of treating different frame subsets of one plot as extra samples.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Sequence

from .data import PlotMeta, Side
from .errors import InvalidRange, MissingSide


class ShortRangeWarning(UserWarning):
    """The frame interval is too short to give distinct frames."""


@dataclass(frozen=True)
class ViewSet:
    plot_id: str
    views: tuple[tuple[Side, int], ...]
    views_per_side: int
    sample_index: int = 0
    ground_truth_pods: int | None = None


def select_frames(start: int, end: int, n: int) -> list[int]:
    """``n`` frame indices at ``round_half_up(start + (end-start)*(k+1)/(n+1))``."""
    if n < 1:
        raise InvalidRange(f"need at least one frame, got n={n}")
    if start > end:
        raise InvalidRange(f"empty frame interval [{start}, {end}]")
    span = end - start
    picks = [math.floor(start + Fraction(span * (k + 1), n + 1) + Fraction(1, 2)) for k in range(n)]
    if len(set(picks)) < n:
        warnings.warn(f"interval [{start}, {end}] yields repeated frames for n={n}", ShortRangeWarning,
                      stacklevel=2)
    return picks


def _shift_for(sample_index: int, shift: int) -> int:
    if sample_index == 0:
        return 0
    step = (sample_index + 1) // 2
    return step * shift if sample_index % 2 else -step * shift


def build_view_sets(
    plots: Sequence[PlotMeta],
    n_per_side: int,
    sides: Sequence[Side | str] = (Side.A, Side.B),
    augment: int = 1,
    shift: int = 2,
) -> list[ViewSet]:
    """One view set per plot (times ``augment`` variants), sides in the given order."""
    if augment < 1:
        raise InvalidRange("augmentation factor must be >= 1")
    sides = [Side(s) for s in sides]
    by_plot: dict[str, dict[Side, PlotMeta]] = {}
    for meta in plots:
        by_plot.setdefault(meta.plot_id, {})[meta.side] = meta

    out = []
    for plot_id, per_side in by_plot.items():
        for side in sides:
            if side not in per_side:
                raise MissingSide(plot_id, side.value)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShortRangeWarning)
            base = {side: select_frames(per_side[side].frame_start, per_side[side].frame_end, n_per_side)
                    for side in sides}
        gt = per_side[sides[0]].ground_truth_pods
        for j in range(augment):
            d = _shift_for(j, shift)
            views = []
            for side in sides:
                meta = per_side[side]
                shifted = sorted(min(meta.frame_end, max(meta.frame_start, f + d)) for f in base[side])
                views.extend((side, f) for f in shifted)
            out.append(ViewSet(plot_id, tuple(views), n_per_side, j, gt))
    return out


MANIFEST_COLUMNS = ("plot_id", "side", "frame_id", "sample_index")


def write_manifest(view_sets: Iterable[ViewSet], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for vs in view_sets:
        for side, frame in vs.views:
            w.writerow([vs.plot_id, side.value, frame, vs.sample_index])


def read_manifest(fh: IO[str], ground_truth: dict[str, int] | None = None) -> list[ViewSet]:
    """Rebuild view sets from a manifest, preserving row order within each set."""
    groups: dict[tuple[str, int], list[tuple[Side, int]]] = {}
    for row in csv.DictReader(line for line in fh if not line.startswith("#")):
        key = (row["plot_id"], int(row["sample_index"]))
        groups.setdefault(key, []).append((Side(row["side"]), int(row["frame_id"])))
    out = []
    for (plot_id, j), views in groups.items():
        n_sides = len({s for s, _ in views})
        out.append(ViewSet(plot_id, tuple(views), len(views) // max(n_sides, 1), j,
                           None if ground_truth is None else ground_truth.get(plot_id)))
    return out
