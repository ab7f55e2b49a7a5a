"""Breeding-decision analytics: correlations and top-fraction selection metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateCutoff, LengthMismatch, UndefinedMetric, ZeroVariance

DEFAULT_CUTOFFS = (0.2, 0.3)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class CutoffResult:
    fraction: float
    counts: ConfusionCounts
    accuracy: float
    sensitivity: float
    specificity: float


@dataclass(frozen=True)
class RankingReport:
    pearson_r: float | None
    spearman_rho: float | None
    cutoffs: dict[float, CutoffResult] = field(default_factory=dict)
    notes: tuple[str, ...] = ()


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"need two equal-length sequences, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise LengthMismatch("correlation needs at least two points")
    return x, y


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("correlation undefined for a constant sequence")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def cutoff_size(n: int, p: float) -> int:
    """``floor(p * n)``, immune to representation error such as 0.29 * 100."""
    return math.floor(round(p * n, 9))


def top_k_indices(values: Sequence[float], k: int) -> set[int]:
    """Indices of the k largest values; ties favour the lower index."""
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return set(order[:k])


def top_fraction_selection(gt: Sequence[float], pred: Sequence[float], p: float) -> ConfusionCounts:
    if len(gt) != len(pred):
        raise LengthMismatch(f"{len(gt)} ground-truth counts vs {len(pred)} predictions")
    if len(gt) < 1:
        raise LengthMismatch("selection needs at least one plot")
    if not 0 < p < 1:
        raise DegenerateCutoff(f"cutoff fraction must be in (0, 1), got {p}")
    n = len(gt)
    k = cutoff_size(n, p)
    if k == 0:
        raise DegenerateCutoff(f"top {p:.0%} of {n} plots selects nothing")
    actual = top_k_indices(list(map(float, gt)), k)
    chosen = top_k_indices(list(map(float, pred)), k)
    tp = len(actual & chosen)
    fp = len(chosen - actual)
    fn = len(actual - chosen)
    return ConfusionCounts(tp, n - tp - fp - fn, fp, fn)


def classification_metrics(c: ConfusionCounts) -> tuple[float, float, float]:
    """(accuracy, sensitivity, specificity)."""
    if c.tp + c.fn < 1 or c.tn + c.fp < 1:
        raise UndefinedMetric(f"need both classes present, got {c}")
    return ((c.tp + c.tn) / c.n, c.tp / (c.tp + c.fn), c.tn / (c.tn + c.fp))


def round_half_up(value: float, places: int = 2) -> float:
    """Decimal rounding as printed in tables (0.925 -> 0.93)."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def cutoff_result(c: ConfusionCounts, p: float) -> CutoffResult:
    return CutoffResult(p, c, *classification_metrics(c))


def ranking_report(gt: Sequence[float], pred: Sequence[float],
                   cutoffs: Sequence[float] = DEFAULT_CUTOFFS) -> RankingReport:
    """Correlations plus per-cutoff selection metrics.

    A constant prediction leaves the correlations as ``None`` (with a note)
    while the selection metrics are still computed.
    """
    notes = []
    try:
        r = pearson(gt, pred)
        rho = spearman(gt, pred)
    except ZeroVariance as exc:
        r = rho = None
        notes.append(f"correlation undefined: {exc}")
    per_cutoff = {}
    for p in cutoffs:
        per_cutoff[p] = cutoff_result(top_fraction_selection(gt, pred, p), p)
    return RankingReport(r, rho, per_cutoff, tuple(notes))


ROW_NAMES = ("True Positive", "True Negative", "False Positive", "False Negative",
             "Accuracy", "Sensitivity", "Specificity")


def format_table(results: Mapping[str, Mapping[float, CutoffResult]], places: int = 2) -> str:
    """CSV laid out like a breeding-selection table: metric rows, model x cutoff columns."""
    columns = [(model, p) for model, per in results.items() for p in per]
    lines = ["metric," + ",".join(f"{m} top {round(p * 100):d}%" for m, p in columns)]
    for row in ROW_NAMES:
        cells = []
        for model, p in columns:
            res = results[model][p]
            c = res.counts
            value = {
                "True Positive": c.tp, "True Negative": c.tn,
                "False Positive": c.fp, "False Negative": c.fn,
                "Accuracy": res.accuracy, "Sensitivity": res.sensitivity, "Specificity": res.specificity,
            }[row]
            cells.append(str(value) if isinstance(value, int) else f"{round_half_up(value, places):.{places}f}")
        lines.append(row + "," + ",".join(cells))
    return "\n".join(lines) + "\n"
