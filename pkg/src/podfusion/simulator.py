"""Seeded synthetic field: plots, pods, and per-frame camera passes.

Geometry.  Plots sit on one row, ``plot_size`` pixels each, separated by
``plot_spacing`` pixels of bare ground.  A camera window of ``image_size``
slides along the row.  While a plot overlaps the window the camera covers
that stretch in a per-plot number of frames drawn log-uniformly from
``frames_per_plot``; across bare ground it moves at ``pass_speed`` px/frame.
Requiring ``plot_spacing >= image width`` keeps at most one plot in view.

Noise.  For every frame that shows a plot, each in-view pod is hidden with
the view's occlusion probability (angle dependent, perturbed per view by
``occlusion_spread``), then dropped with ``miss_rate``; survivors get
Gaussian centroid jitter and a Kumaraswamy-distributed confidence.
Poisson(``false_positive_rate``) spurious boxes are scattered over the frame.

All randomness comes from :mod:`podfusion.rng` streams keyed by
``(seed, purpose, side, frame)`` so any frame can be regenerated alone.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Iterator, Sequence

import numpy as np

from .data import PLOT, POD, Detection, FrameRecord, PlotMeta, Side
from .errors import InvalidConfig
from .geometry import BoundingBox
from .rng import Stream

PASS_SIDES = (Side.A, Side.B)


@dataclass(frozen=True)
class FieldConfig:
    n_plots: int = 10
    pod_mean: float = 599.9
    pod_std: float = 196.60
    pod_range: tuple[int, int] = (142, 1058)
    plot_size: tuple[float, float] = (200.0, 300.0)
    plot_spacing: float = 800.0
    pass_speed: float = 20.0
    frames_per_plot: tuple[int, int] = (11, 98)
    image_size: tuple[int, int] = (640, 360)
    pod_size: tuple[float, float] = (8.0, 16.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("pod_range", "plot_size", "frames_per_plot", "image_size", "pod_size"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_plots < 0:
            raise InvalidConfig("n_plots must be >= 0")
        if not self.pod_mean > 0 or self.pod_std < 0:
            raise InvalidConfig("pod count distribution needs mean > 0 and std >= 0")
        lo, hi = self.pod_range
        if not 0 <= lo <= hi:
            raise InvalidConfig(f"bad pod_range {self.pod_range}")
        fmin, fmax = self.frames_per_plot
        if not 1 <= fmin <= fmax:
            raise InvalidConfig(f"bad frames_per_plot {self.frames_per_plot}")
        if self.pass_speed <= 0:
            raise InvalidConfig("pass_speed must be > 0")
        if self.plot_spacing < self.image_size[0]:
            raise InvalidConfig("plot_spacing must be at least the image width")
        pw, ph = self.plot_size
        if not (0 < pw <= self.image_size[0] and 0 < ph <= self.image_size[1]):
            raise InvalidConfig("plot_size must fit inside the image")
        smin, smax = self.pod_size
        if not 0 < smin <= smax < min(pw, ph):
            raise InvalidConfig(f"bad pod_size {self.pod_size}")

    @classmethod
    def from_dict(cls, d: dict) -> "FieldConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class AngularOcclusion:
    """Occlusion probability ``base + slope * |angle|`` clipped to [0, 1].

    ``angle`` is the plot centre's horizontal offset from the image centre,
    in half-image-widths (0 = head on, +-1 = at the image border).
    """

    base: float = 0.0
    slope: float = 0.0

    def __call__(self, angle: float) -> float:
        return min(1.0, max(0.0, self.base + self.slope * abs(angle)))


@dataclass(frozen=True)
class NoiseModel:
    miss_rate: float = 0.1
    false_positive_rate: float = 2.0
    jitter_std: float = 1.0
    score_params: tuple[float, float] = (5.0, 2.0)
    occlusion: AngularOcclusion = field(default_factory=AngularOcclusion)
    occlusion_spread: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "score_params", tuple(self.score_params))
        if isinstance(self.occlusion, dict):
            object.__setattr__(self, "occlusion", AngularOcclusion(**self.occlusion))
        if not 0 <= self.miss_rate <= 1:
            raise InvalidConfig("miss_rate must be in [0, 1]")
        if self.false_positive_rate < 0 or self.jitter_std < 0:
            raise InvalidConfig("false_positive_rate and jitter_std must be >= 0")
        if not 0 <= self.occlusion_spread <= 1:
            raise InvalidConfig("occlusion_spread must be in [0, 1]")
        if min(self.score_params) <= 0:
            raise InvalidConfig("score_params must be positive")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls(miss_rate=0.0, false_positive_rate=0.0, jitter_std=0.0,
                   occlusion=AngularOcclusion(0.0, 0.0), occlusion_spread=0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def occlusion_fraction_per_view(self, angle: float) -> float:
        return self.occlusion(angle)


@dataclass(frozen=True, eq=False)
class SimPlot:
    plot_id: str
    true_pod_count: int
    pods: np.ndarray  # (n, 4) local x, y, w, h inside the plot, side-A view
    extent: BoundingBox  # field coordinates

    def __eq__(self, other):
        return (isinstance(other, SimPlot) and self.plot_id == other.plot_id
                and self.true_pod_count == other.true_pod_count and self.extent == other.extent
                and np.array_equal(self.pods, other.pods))


@dataclass(frozen=True, eq=False)
class PassLayout:
    camera: np.ndarray  # left edge of the camera window per frame, field x
    plot_of_frame: np.ndarray  # plot index visible in each frame, -1 for none
    intervals: tuple[tuple[int, int], ...]  # per plot (first frame, last frame)

    @property
    def n_frames(self) -> int:
        return len(self.camera)

    def __eq__(self, other):
        return (isinstance(other, PassLayout) and self.intervals == other.intervals
                and np.array_equal(self.camera, other.camera)
                and np.array_equal(self.plot_of_frame, other.plot_of_frame))


@dataclass(frozen=True, eq=False)
class SyntheticField:
    config: FieldConfig
    plots: tuple[SimPlot, ...]
    passes: dict  # Side -> PassLayout

    def __eq__(self, other):
        return (isinstance(other, SyntheticField) and self.config == other.config
                and self.plots == other.plots and self.passes == other.passes)

    @property
    def true_counts(self) -> list[int]:
        return [p.true_pod_count for p in self.plots]

    def plot_meta(self) -> list[PlotMeta]:
        rows = []
        for i, p in enumerate(self.plots):
            for side in PASS_SIDES:
                s, e = self.passes[side].intervals[i]
                rows.append(PlotMeta(p.plot_id, side, s, e, p.true_pod_count))
        return rows


def _q(x):
    return np.round(x, 2)


def _layout_pass(cfg: FieldConfig, side: Side) -> PassLayout:
    img_w = cfg.image_size[0]
    pw = cfg.plot_size[0]
    fmin, fmax = cfg.frames_per_plot
    stream = Stream(cfg.seed, "layout", side.value)
    u = stream.uniform(cfg.n_plots)
    # log-uniform frame counts, inclusive of both ends
    counts = np.floor(np.exp(np.log(fmin) + u * (np.log(fmax + 1) - np.log(fmin)))).astype(int)
    counts = np.clip(counts, fmin, fmax)

    gap_travel = cfg.plot_spacing - img_w
    gap_frames = max(1, int(math.ceil(gap_travel / cfg.pass_speed)))
    camera, owner, intervals = [], [], []
    for i in range(cfg.n_plots):
        x_i = i * (pw + cfg.plot_spacing)
        enter = x_i - img_w
        for g in range(gap_frames):
            camera.append(enter - gap_travel + (g + 0.5) * gap_travel / gap_frames)
            owner.append(-1)
        step = (img_w + pw) / counts[i]
        first = len(camera)
        for t in range(counts[i]):
            camera.append(enter + (t + 0.5) * step)
            owner.append(i)
        intervals.append((first, len(camera) - 1))
    if cfg.n_plots:
        last_exit = (cfg.n_plots - 1) * (pw + cfg.plot_spacing) + pw
        for g in range(gap_frames):
            camera.append(last_exit + (g + 0.5) * gap_travel / gap_frames)
            owner.append(-1)
    return PassLayout(np.array(camera, dtype=float), np.array(owner, dtype=int), tuple(intervals))


def generate_field(config: FieldConfig) -> SyntheticField:
    """Draw plot pod counts, pod boxes and both camera-pass layouts."""
    cfg = config
    lo, hi = cfg.pod_range
    counts = Stream(cfg.seed, "pod_counts").truncated_normal(cfg.pod_mean, cfg.pod_std, lo, hi, cfg.n_plots)
    counts = np.clip(np.floor(counts + 0.5), lo, hi).astype(int)

    pw, ph = cfg.plot_size
    img_h = cfg.image_size[1]
    smin, smax = cfg.pod_size
    plots = []
    for i in range(cfg.n_plots):
        n = int(counts[i])
        s = Stream(cfg.seed, "pods", i)
        w = _q(smin + s.uniform(n) * (smax - smin))
        h = _q(smin + s.uniform(n) * (smax - smin))
        x = _q(s.uniform(n) * (pw - w))
        y = _q(s.uniform(n) * (ph - h))
        extent = BoundingBox(i * (pw + cfg.plot_spacing), (img_h - ph) / 2, pw, ph)
        plots.append(SimPlot(f"plot_{i:04d}", n, np.column_stack([x, y, w, h]), extent))
    passes = {side: _layout_pass(cfg, side) for side in PASS_SIDES}
    return SyntheticField(cfg, tuple(plots), passes)


# -- rendering ---------------------------------------------------------------

@dataclass(frozen=True)
class FrameArrays:
    """One rendered frame as arrays; scores are NaN for unscored boxes."""

    frame_id: int
    boxes: np.ndarray  # (n, 4)
    scores: np.ndarray  # (n,)
    labels: tuple[str, ...]

    def to_record(self) -> FrameRecord:
        dets = tuple(
            Detection(BoundingBox(*map(float, b)), None if math.isnan(s) else float(s), lab)
            for b, s, lab in zip(self.boxes, self.scores, self.labels)
        )
        return FrameRecord(self.frame_id, dets)

    def to_json(self) -> str:
        """Same bytes as :func:`podfusion.data.format_frame` on :meth:`to_record`."""
        parts = []
        for (x, y, w, h), s, lab in zip(self.boxes.tolist(), self.scores.tolist(), self.labels):
            score = "" if math.isnan(s) else f',"score":{s!r}'
            parts.append(f'{{"x":{x!r},"y":{y!r},"w":{w!r},"h":{h!r}{score},"label":{json.dumps(lab)}}}')
        return f'{{"frame_id":{self.frame_id},"detections":[{",".join(parts)}]}}'


def _clip_boxes(boxes: np.ndarray, img_w: float) -> np.ndarray:
    x1 = np.maximum(boxes[:, 0], 0.0)
    x2 = np.minimum(boxes[:, 0] + boxes[:, 2], img_w)
    return _q(np.column_stack([x1, boxes[:, 1], x2 - x1, boxes[:, 3]]))


def _scores(stream: Stream, noise: NoiseModel, n: int) -> np.ndarray:
    a, b = noise.score_params
    return np.clip(np.round(stream.kumaraswamy(a, b, n), 4), 0.0, 1.0)


def render_frame(field_: SyntheticField, side: Side, noise: NoiseModel, frame_id: int) -> tuple[FrameArrays, FrameArrays]:
    """Noisy and ground-truth content of one frame of one pass."""
    cfg = field_.config
    side = Side(side)
    layout = field_.passes[side]
    img_w, img_h = cfg.image_size
    cam = layout.camera[frame_id]
    owner = layout.plot_of_frame[frame_id]
    st = Stream(cfg.seed, "render", side.value, frame_id)

    truth_boxes = [np.zeros((0, 4))]
    truth_labels: list[str] = []
    noisy_boxes = [np.zeros((0, 4))]
    noisy_scores = [np.zeros(0)]
    noisy_labels: list[str] = []

    if owner >= 0:
        plot = field_.plots[owner]
        ext = plot.extent
        plot_box = _clip_boxes(np.array([[ext.x - cam, ext.y, ext.w, ext.h]]), img_w)
        truth_boxes.append(plot_box)
        truth_labels.append(PLOT)

        pods = plot.pods
        local_x = pods[:, 0] if side == Side.A else ext.w - pods[:, 0] - pods[:, 2]
        img_x = ext.x - cam + local_x
        img_boxes = np.column_stack([img_x, ext.y + pods[:, 1], pods[:, 2], pods[:, 3]])
        cx = img_x + pods[:, 2] / 2
        in_view = (cx >= 0) & (cx < img_w)
        pod_boxes = _clip_boxes(img_boxes[in_view], img_w)
        n = len(pod_boxes)
        truth_boxes.append(pod_boxes)
        truth_labels.extend([POD] * n)

        # view-level draws first so the stream layout does not depend on n
        angle = (ext.x - cam + ext.w / 2 - img_w / 2) / (img_w / 2)
        q_nominal = noise.occlusion(angle)
        q = min(1.0, max(0.0, q_nominal * (1.0 + noise.occlusion_spread * (2.0 * st.random() - 1.0))))
        plot_jitter = st.normal(2, std=noise.jitter_std) if noise.jitter_std > 0 else np.zeros(2)
        plot_score = _scores(st.child("plot_score"), noise, 1)

        pod_st = st.child("pods")
        visible = pod_st.uniform(n) >= q
        detected = visible & (pod_st.uniform(n) >= noise.miss_rate)
        kept = pod_boxes[detected].copy()
        if noise.jitter_std > 0 and len(kept):
            kept[:, 0] += pod_st.normal(len(kept), std=noise.jitter_std)
            kept[:, 1] += pod_st.normal(len(kept), std=noise.jitter_std)
            kept = _q(kept)
        pb = plot_box.copy()
        pb[:, :2] = _q(pb[:, :2] + plot_jitter)
        noisy_boxes.extend([pb, kept])
        noisy_scores.extend([plot_score, _scores(pod_st.child("scores"), noise, len(kept))])
        noisy_labels.append(PLOT)
        noisy_labels.extend([POD] * len(kept))

    if noise.false_positive_rate > 0:
        fp_st = st.child("false_positives")
        k = fp_st.poisson(noise.false_positive_rate)
        if k:
            smin, smax = cfg.pod_size
            w = _q(smin + fp_st.uniform(k) * (smax - smin))
            h = _q(smin + fp_st.uniform(k) * (smax - smin))
            x = _q(fp_st.uniform(k) * (img_w - w))
            y = _q(fp_st.uniform(k) * (img_h - h))
            noisy_boxes.append(np.column_stack([x, y, w, h]))
            noisy_scores.append(_scores(fp_st.child("scores"), noise, k))
            noisy_labels.extend([POD] * k)

    truth = np.concatenate(truth_boxes)
    noisy = FrameArrays(frame_id, np.concatenate(noisy_boxes), np.concatenate(noisy_scores), tuple(noisy_labels))
    return noisy, FrameArrays(frame_id, truth, np.full(len(truth), np.nan), tuple(truth_labels))


def iter_pass(field_: SyntheticField, side: Side, noise: NoiseModel) -> Iterator[tuple[FrameArrays, FrameArrays]]:
    for t in range(field_.passes[Side(side)].n_frames):
        yield render_frame(field_, side, noise, t)


def render_pass(field_: SyntheticField, side: Side, noise: NoiseModel) -> tuple[list[FrameRecord], list[FrameRecord]]:
    """Materialise a whole pass as (noisy, ground-truth) frame records."""
    noisy, truth = [], []
    for n, t in iter_pass(field_, side, noise):
        noisy.append(n.to_record())
        truth.append(t.to_record())
    return noisy, truth


# -- export ------------------------------------------------------------------

def annotation_images(field_: SyntheticField) -> dict[str, list[Detection]]:
    """Every plot's full pod inventory, in plot-local coordinates."""
    return {
        p.plot_id: [Detection(BoundingBox(*map(float, row)), None, POD) for row in p.pods]
        for p in field_.plots
    }


def _subset(fa: FrameArrays, label: str) -> FrameArrays:
    keep = [i for i, lab in enumerate(fa.labels) if lab == label]
    return FrameArrays(fa.frame_id, fa.boxes[keep], fa.scores[keep], tuple(fa.labels[i] for i in keep))


def write_pass(field_: SyntheticField, side: Side, noise: NoiseModel, plots_fh: IO[str],
               pods_fh: IO[str], truth_fh: IO[str] | None = None) -> None:
    """Stream one pass to disk: plot boxes, pod boxes, optional ground truth."""
    for noisy, truth in iter_pass(field_, side, noise):
        plots_fh.write(_subset(noisy, PLOT).to_json() + "\n")
        pods_fh.write(_subset(noisy, POD).to_json() + "\n")
        if truth_fh is not None:
            truth_fh.write(truth.to_json() + "\n")


def config_hash(config: FieldConfig, noise: NoiseModel) -> str:
    blob = json.dumps({"field": asdict(config), "noise": asdict(noise)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()
