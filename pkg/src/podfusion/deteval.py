"""Detection scoring: IoU matching, precision-recall curves, AP and mAP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Detection, FrameRecord
from .errors import EmptyClassMap, NoGroundTruth, UnscoredPrediction
from .geometry import boxes_to_array, iou_pairs

ALL_POINT = "all-point"
ELEVEN_POINT = "11-point"


@dataclass(frozen=True)
class MatchOutcome:
    """Per-prediction TP flags sorted by descending score."""

    scores: tuple[float, ...]
    is_tp: tuple[bool, ...]
    n_ground_truth: int

    @property
    def n_predictions(self) -> int:
        return len(self.scores)

    @classmethod
    def merge(cls, outcomes: Iterable["MatchOutcome"]) -> "MatchOutcome":
        """Combine per-image outcomes, re-sorting flags by score.

        The merge is order-insensitive: ties in score are broken by the TP
        flag (TP first) and never by image order.
        """
        outcomes = list(outcomes)
        pairs = [(s, t) for o in outcomes for s, t in zip(o.scores, o.is_tp)]
        pairs.sort(key=lambda p: (-p[0], not p[1]))
        return cls(
            tuple(p[0] for p in pairs),
            tuple(p[1] for p in pairs),
            sum(o.n_ground_truth for o in outcomes),
        )


@dataclass(frozen=True)
class PrCurve:
    recall: tuple[float, ...]
    precision: tuple[float, ...]

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall, self.precision))


def match_at_iou(
    predictions: Sequence[Detection], ground_truth: Sequence[Detection], threshold: float = 0.55
) -> MatchOutcome:
    """Greedy PASCAL-style matching of scored predictions to ground truth.

    Predictions are visited by descending score (input order among equal
    scores).  Each one takes the unmatched ground-truth box with the highest
    IoU; it is a true positive when that IoU reaches ``threshold``.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"IoU threshold must be in (0, 1], got {threshold}")
    for i, p in enumerate(predictions):
        if p.score is None:
            raise UnscoredPrediction(f"prediction {i} has no confidence score")

    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    n_gt = len(ground_truth)
    if not predictions:
        return MatchOutcome((), (), n_gt)

    flags = [False] * len(order)
    if n_gt:
        pred_arr = boxes_to_array([predictions[i].box for i in order])
        gt_arr = boxes_to_array([g.box for g in ground_truth])
        # Only pairs at or above the threshold can match, so the best untaken
        # candidate of each prediction is exactly the dense-matrix argmax.
        rows, cols, vals = iou_pairs(pred_arr, gt_arr, threshold)
        by = np.lexsort((cols, -vals, rows))
        rows, cols = rows[by].tolist(), cols[by].tolist()
        taken = [False] * n_gt
        for r, c in zip(rows, cols):
            if not flags[r] and not taken[c]:
                taken[c] = True
                flags[r] = True
    return MatchOutcome(tuple(float(predictions[i].score) for i in order), tuple(flags), n_gt)


def pr_curve(outcome: MatchOutcome) -> PrCurve:
    if outcome.n_ground_truth < 1:
        raise NoGroundTruth("precision-recall needs at least one ground-truth box")
    tp = np.cumsum(np.asarray(outcome.is_tp, dtype=float))
    ranks = np.arange(1, len(tp) + 1, dtype=float)
    recall = tp / outcome.n_ground_truth
    precision = tp / ranks if len(tp) else tp
    return PrCurve(tuple(recall.tolist()), tuple(precision.tolist()))


def average_precision(outcome: MatchOutcome, interpolation: str = ALL_POINT) -> float:
    """Area under the interpolated precision-recall curve.

    ``all-point``: precision at each recall is the maximum precision at that
    recall or beyond, integrated over every recall step.  ``11-point``: mean
    of that envelope sampled at recall 0, 0.1, ..., 1.
    """
    curve = pr_curve(outcome)
    if not curve.recall:
        return 0.0
    recall = np.concatenate(([0.0], curve.recall, [1.0]))
    precision = np.concatenate(([0.0], curve.precision, [0.0]))
    # running max from the right gives the interpolated envelope
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interpolation == ALL_POINT:
        steps = np.nonzero(recall[1:] != recall[:-1])[0]
        ap = float(np.sum((recall[steps + 1] - recall[steps]) * envelope[steps + 1]))
    elif interpolation == ELEVEN_POINT:
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = envelope[recall >= t]
            ap += float(above.max()) if above.size else 0.0
        ap /= 11.0
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return min(1.0, max(0.0, ap))


def mean_ap(per_class_ap: Mapping[str, float]) -> float:
    if not per_class_ap:
        raise EmptyClassMap("mean_ap needs at least one class")
    return float(sum(per_class_ap.values()) / len(per_class_ap))


@dataclass(frozen=True)
class ClassResult:
    label: str
    n_gt: int
    n_pred: int
    ap: float


@dataclass(frozen=True)
class EvalReport:
    threshold: float
    interpolation: str
    classes: tuple[ClassResult, ...]
    map: float

    def to_csv(self) -> str:
        lines = ["threshold,class,n_gt,n_pred,AP"]
        for c in self.classes:
            lines.append(f"{self.threshold},{c.label},{c.n_gt},{c.n_pred},{c.ap:.6f}")
        n_gt = sum(c.n_gt for c in self.classes)
        n_pred = sum(c.n_pred for c in self.classes)
        lines.append(f"{self.threshold},mAP,{n_gt},{n_pred},{self.map:.6f}")
        return "\n".join(lines) + "\n"


def evaluate_frames(
    predictions: Sequence[FrameRecord],
    ground_truth: Sequence[FrameRecord],
    threshold: float = 0.55,
    interpolation: str = ALL_POINT,
    labels: Sequence[str] | None = None,
) -> EvalReport:
    """Per-class AP over a frame sequence, matching within each frame."""
    pred_by_frame = {r.frame_id: r for r in predictions}
    gt_by_frame = {r.frame_id: r for r in ground_truth}
    if labels is None:
        labels = sorted({d.class_label for r in ground_truth for d in r.detections})
    frame_ids = sorted(set(pred_by_frame) | set(gt_by_frame))
    results = []
    for label in labels:
        outcomes = []
        for fid in frame_ids:
            preds = [d for d in pred_by_frame[fid].detections if d.class_label == label] if fid in pred_by_frame else []
            gts = [d for d in gt_by_frame[fid].detections if d.class_label == label] if fid in gt_by_frame else []
            outcomes.append(match_at_iou(preds, gts, threshold))
        merged = MatchOutcome.merge(outcomes)
        results.append(ClassResult(label, merged.n_ground_truth, merged.n_predictions,
                                   average_precision(merged, interpolation)))
    return EvalReport(threshold, interpolation, tuple(results),
                      mean_ap({r.label: r.ap for r in results}))
