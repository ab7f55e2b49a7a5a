"""File-to-file pipeline stages and the end-to-end driver.

Each ``stage_*`` function reads its inputs from disk and writes its outputs
to disk, so running the stages one by one (the CLI subcommands) and running
:func:`run_pipeline` give the same files.  Reports carry the tool version
and the SHA-256 of every input, and nothing time- or path-dependent.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .data import (
    PLOT,
    POD,
    FrameRecord,
    Side,
    dataset_stats,
    dump_annotations,
    iter_detections,
    parse_annotations,
    parse_detections,
    read_counts,
    read_plot_meta,
    write_plot_meta,
)
from .deteval import ALL_POINT, evaluate_frames
from .errors import DataError, MalformedDocument, StaleCache
from .featurize import FeatureGrid, detection_heatmap, load_feature_grid, save_feature_grid
from .frames import ViewSet, build_view_sets, read_manifest, write_manifest
from .ranking import (
    DEFAULT_CUTOFFS,
    ConfusionCounts,
    cutoff_result,
    format_table,
    ranking_report,
)
from .regressor import Network, NetworkConfig, fuse_views, load_model, save_model, train
from .rng import Stream
from .simulator import (
    PASS_SIDES,
    FieldConfig,
    NoiseModel,
    annotation_images,
    config_hash,
    generate_field,
    write_pass,
)
from .svg import scatter_svg
from .tracker import TrackerConfig, format_assignments, format_track_table, read_track_table, run_sequence

log = logging.getLogger(__name__)

TOOL = f"podfusion {__version__}"


class StageFailure(Exception):
    """Wraps the error of a failed pipeline stage with the stage name."""

    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.error = error
        super().__init__(f"stage {stage}: {error}")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance_lines(inputs: Iterable[str | Path]) -> list[str]:
    lines = [f"# tool={TOOL}"]
    for p in inputs:
        lines.append(f"# input {Path(p).name} sha256={sha256_file(p)}")
    return lines


def provenance_dict(inputs: Iterable[str | Path]) -> dict:
    return {"tool": TOOL, "inputs": {Path(p).name: sha256_file(p) for p in inputs}}


def _write_report(path: Path, body: str, inputs: Iterable[str | Path]) -> None:
    path.write_text("\n".join(provenance_lines(inputs)) + "\n" + body)


def _read_text(path: str | Path) -> str:
    return Path(path).read_text()


# -- simulate ----------------------------------------------------------------

def stage_simulate(field_cfg: FieldConfig, noise: NoiseModel, out_dir: str | Path,
                   write_truth: bool = True) -> dict:
    """Generate a field and write detections, metadata, annotations and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fld = generate_field(field_cfg)
    files = []
    for side in PASS_SIDES:
        names = [f"plots_{side.value}.jsonl", f"pods_{side.value}.jsonl"]
        if write_truth:
            names.append(f"truth_{side.value}.jsonl")
        handles = [open(out / n, "w") for n in names]
        try:
            write_pass(fld, side, noise, handles[0], handles[1], handles[2] if write_truth else None)
        finally:
            for h in handles:
                h.close()
        files.extend(names)
    with open(out / "plots.csv", "w") as fh:
        write_plot_meta(fld.plot_meta(), fh)
    (out / "annotations.json").write_text(dump_annotations(annotation_images(fld)))
    files.extend(["plots.csv", "annotations.json"])
    provenance = {
        "tool": TOOL,
        "seed": field_cfg.seed,
        "config_hash": config_hash(field_cfg, noise),
        "field": asdict(field_cfg),
        "noise": asdict(noise),
        "n_frames": {s.value: fld.passes[s].n_frames for s in PASS_SIDES},
    }
    (out / "provenance.json").write_text(json.dumps(provenance, indent=1, sort_keys=True) + "\n")
    files.append("provenance.json")
    manifest = {"tool": TOOL, "files": {n: sha256_file(out / n) for n in sorted(files)}}
    text = json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    (out / "manifest.json").write_text(text)
    manifest["manifest_hash"] = hashlib.sha256(text.encode()).hexdigest()
    return manifest


# -- track -------------------------------------------------------------------

def stage_track(detections: str | Path, out_prefix: str | Path, config: TrackerConfig | None = None,
                label: str | None = PLOT) -> tuple[Path, Path]:
    """Track plot boxes; writes ``<prefix>.jsonl`` assignments and ``<prefix>.csv`` summary."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(detections) as fh:
        frames = parse_detections(fh, label=label)
    assignments, tracks = run_sequence(frames, config)
    jsonl = out_prefix.with_suffix(".jsonl")
    table = out_prefix.with_suffix(".csv")
    jsonl.write_text(format_assignments(assignments))
    _write_report(table, format_track_table(tracks), [detections])
    return jsonl, table


def plot_intervals_from_tracks(meta_rows, track_rows) -> dict[tuple[str, Side], tuple[int, int]]:
    """Map each plot side to its best-overlapping track's frame interval.

    A plot is paired with the track whose lifetime overlaps the plot's
    metadata interval most (lowest track id on ties); the selection window
    is the intersection of the two.  Plots no track overlaps keep their
    metadata interval.
    """
    out = {}
    for m in meta_rows:
        best, best_overlap = None, 0
        for tid, first, last, _ in track_rows:
            overlap = min(last, m.frame_end) - max(first, m.frame_start) + 1
            if overlap > best_overlap:
                best, best_overlap = (max(first, m.frame_start), min(last, m.frame_end)), overlap
        out[(m.plot_id, m.side)] = best if best is not None else (m.frame_start, m.frame_end)
    return out


# -- featurize ---------------------------------------------------------------

def stage_featurize(
    meta_path: str | Path,
    detections: Mapping[str, str | Path],
    out_dir: str | Path,
    views_per_side: int = 1,
    tracks: Mapping[str, str | Path] | None = None,
    augment: int = 1,
    shift: int = 2,
    grid_size: tuple[int, int] = (16, 16),
    image_size: tuple[int, int] = (640, 360),
    label: str = POD,
) -> Path:
    """Select frames per plot side and turn each into a heatmap grid file.

    Writes ``views.csv`` (view-set manifest), ``grids/*.pfg`` and
    ``features.csv`` listing each view's grid.
    """
    out = Path(out_dir)
    (out / "grids").mkdir(parents=True, exist_ok=True)
    with open(meta_path) as fh:
        meta = read_plot_meta(fh)
    sides = [Side(s) for s in detections]
    if tracks:
        track_rows = {}
        for side, path in tracks.items():
            with open(path) as fh:
                track_rows[Side(side)] = read_track_table(fh)
        meta_sel = []
        for m in meta:
            if m.side in track_rows:
                s, e = plot_intervals_from_tracks([m], track_rows[m.side])[(m.plot_id, m.side)]
                meta_sel.append(replace(m, frame_start=s, frame_end=e))
            else:
                meta_sel.append(m)
    else:
        meta_sel = meta
    meta_sel = [m for m in meta_sel if m.side in sides]
    view_sets = build_view_sets(meta_sel, views_per_side, sides=sides, augment=augment, shift=shift)
    with open(out / "views.csv", "w") as fh:
        write_manifest(view_sets, fh)

    needed: dict[Side, set[int]] = {s: set() for s in sides}
    for vs in view_sets:
        for side, frame in vs.views:
            needed[side].add(frame)
    grid_names: dict[tuple[Side, int], str] = {}
    for side in sides:
        with open(detections[side.value]) as fh:
            for rec in iter_detections(fh, frames=needed[side], label=label):
                name = f"grids/{side.value}_{rec.frame_id:06d}.pfg"
                save_feature_grid(detection_heatmap(rec.detections, image_size, grid_size), out / name)
                grid_names[(side, rec.frame_id)] = name
        missing = needed[side] - {f for s, f in grid_names if s == side}
        if missing:
            raise DataError(f"side {side.value}: detections file lacks frames {sorted(missing)[:5]}")

    rows = ["plot_id,sample_index,view_index,side,frame_id,path"]
    for vs in view_sets:
        for vi, (side, frame) in enumerate(vs.views):
            rows.append(f"{vs.plot_id},{vs.sample_index},{vi},{side.value},{frame},{grid_names[(side, frame)]}")
    inputs = [meta_path, *detections.values(), *(tracks or {}).values()]
    _write_report(out / "features.csv", "\n".join(rows) + "\n", inputs)
    return out / "features.csv"


def load_features(features_csv: str | Path) -> dict[tuple[str, int], np.ndarray]:
    """(plot_id, sample_index) -> fused input, views in manifest order."""
    base = Path(features_csv).parent
    groups: dict[tuple[str, int], list[tuple[int, str]]] = {}
    with open(features_csv) as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            groups.setdefault((row["plot_id"], int(row["sample_index"])), []).append(
                (int(row["view_index"]), row["path"]))
    cache: dict[str, FeatureGrid] = {}
    out = {}
    for key, views in groups.items():
        grids = []
        for _, rel in sorted(views):
            if rel not in cache:
                cache[rel] = load_feature_grid(base / rel)
            grids.append(cache[rel])
        out[key] = fuse_views(grids)
    return out


def _ground_truth(meta_path) -> dict[str, int]:
    with open(meta_path) as fh:
        return {m.plot_id: m.ground_truth_pods for m in read_plot_meta(fh)}


# -- train / predict ---------------------------------------------------------

def make_split(plot_ids: Sequence[str], test_fraction: float, seed: int) -> dict[str, str]:
    ids = sorted(plot_ids)
    n_test = int(round(len(ids) * test_fraction))
    order = Stream(seed, "split").permutation(len(ids))
    test = {ids[i] for i in order[:n_test]}
    return {p: ("test" if p in test else "train") for p in ids}


def read_split(path) -> dict[str, str]:
    with open(path) as fh:
        return {r["plot_id"]: r["split"] for r in csv.DictReader(l for l in fh if not l.startswith("#"))}


def stage_train(features_csv, meta_path, out_dir, network: NetworkConfig | None = None,
                test_fraction: float = 0.2, split_path=None, seed: int | None = None) -> Path:
    """Fit the regressor on the training split; writes model, split and report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_features(features_csv)
    gt = _ground_truth(meta_path)
    c, h, w = next(iter(inputs.values())).shape if inputs else (0, 0, 0)
    cfg = network or NetworkConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    grid_c = cfg.input_grid[0]
    cfg = replace(cfg, views=max(1, c // grid_c), input_grid=(grid_c, h, w))
    plot_ids = sorted({p for p, _ in inputs})
    split = read_split(split_path) if split_path else make_split(plot_ids, test_fraction, cfg.seed)
    train_samples = [(inputs[k], gt[k[0]]) for k in sorted(inputs) if split.get(k[0]) == "train"]
    val_samples = [(inputs[k], gt[k[0]]) for k in sorted(inputs) if split.get(k[0]) == "test" and k[1] == 0]
    net = Network(cfg)
    report = train(net, train_samples, cfg, validation=val_samples or None)
    save_model(net, out / "model.ckpt")
    with open(out / "split.csv", "w") as fh:
        fh.write("plot_id,split\n")
        for p in plot_ids:
            fh.write(f"{p},{split.get(p, 'unused')}\n")
    doc = {"provenance": provenance_dict([features_csv, meta_path]), "config": cfg.to_dict(),
           **report.to_dict(), "n_train": len(train_samples), "n_validation": len(val_samples)}
    (out / "train_report.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return out / "model.ckpt"


def stage_predict(model_path, features_csv, meta_path, out_path, split_path=None) -> Path:
    """Predict each plot's count from its base view set (sample 0)."""
    net = load_model(model_path)
    inputs = load_features(features_csv)
    gt = _ground_truth(meta_path)
    split = read_split(split_path) if split_path else {}
    keys = sorted(k for k in inputs if k[1] == 0)
    preds = net.predict([inputs[k] for k in keys])
    rows = ["plot_id,split,ground_truth,predicted"]
    for (plot_id, _), p in zip(keys, preds):
        rows.append(f"{plot_id},{split.get(plot_id, 'all')},{gt[plot_id]},{p!r}")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    inputs_used = [model_path, features_csv, meta_path] + ([split_path] if split_path else [])
    _write_report(out, "\n".join(rows) + "\n", inputs_used)
    return out


def read_predictions(path, split: str | None = "test") -> tuple[list[str], list[float], list[float]]:
    ids, gt, pred = [], [], []
    with open(path) as fh:
        for row in csv.DictReader(l for l in fh if not l.startswith("#")):
            if split is not None and row.get("split") not in (split, "all"):
                continue
            ids.append(row["plot_id"])
            gt.append(float(row["ground_truth"]))
            pred.append(float(row["predicted"]))
    return ids, gt, pred


# -- rank / stats / eval -----------------------------------------------------

def stage_rank(predictions: Mapping[str, str | Path], out_dir, cutoffs=DEFAULT_CUTOFFS,
               split: str | None = "test") -> dict:
    """Correlations, selection table and scatter plots for one or more models."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table, summary = {}, {}
    corr_rows = ["model,n,pearson,spearman"]
    for model, path in predictions.items():
        _, gt, pred = read_predictions(path, split)
        rep = ranking_report(gt, pred, cutoffs)
        table[model] = rep.cutoffs
        corr_rows.append(f"{model},{len(gt)},{_num(rep.pearson_r)},{_num(rep.spearman_rho)}")
        (out / f"scatter_{_slug(model)}.svg").write_text(
            scatter_svg(gt, pred, title=f"{model} (r = {_num(rep.pearson_r, 3)})"))
        summary[model] = {
            "n": len(gt),
            "pearson": rep.pearson_r,
            "spearman": rep.spearman_rho,
            "notes": list(rep.notes),
            "cutoffs": {str(p): {**asdict(r.counts), "accuracy": r.accuracy, "sensitivity": r.sensitivity,
                                 "specificity": r.specificity} for p, r in rep.cutoffs.items()},
        }
    inputs = list(predictions.values())
    _write_report(out / "ranking.csv", format_table(table), inputs)
    _write_report(out / "correlations.csv", "\n".join(corr_rows) + "\n", inputs)
    return summary


def stage_rank_counts(counts_path, out_path) -> Path:
    """Metric table from given confusion counts (columns model,cutoff,tp,tn,fp,fn)."""
    table: dict[str, dict] = {}
    with open(counts_path) as fh:
        reader = csv.DictReader(l for l in fh if not l.startswith("#"))
        need = {"model", "cutoff", "tp", "tn", "fp", "fn"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise MalformedDocument(f"counts file needs columns {sorted(need)}")
        for row in reader:
            c = ConfusionCounts(int(row["tp"]), int(row["tn"]), int(row["fp"]), int(row["fn"]))
            p = float(row["cutoff"])
            table.setdefault(row["model"], {})[p] = cutoff_result(c, p)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_report(out, format_table(table), [counts_path])
    return out


def stage_stats(counts_path, out_path) -> Path:
    with open(counts_path) as fh:
        counts = read_counts(fh)
    st = dataset_stats(counts)
    body = "n,min,max,mean,std_sample,std_population\n"
    body += f"{st.n},{st.min},{st.max},{st.mean!r},{st.std_sample!r},{st.std_population!r}\n"
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_report(out, body, [counts_path])
    return out


def _load_frames(path, label=None):
    text = _read_text(path)
    if text.lstrip().startswith("{") and not text.lstrip().startswith('{"frame_id"'):
        # VIA-style annotation document keyed by frame id
        ann = parse_annotations(text)
        recs = []
        for key, dets in ann.items():
            digits = "".join(ch for ch in key if ch.isdigit())
            if not digits:
                raise MalformedDocument(f"annotation key {key!r} does not name a frame")
            recs.append(FrameRecord(int(digits), tuple(d for d in dets if label is None or d.class_label == label)))
        return sorted(recs, key=lambda r: r.frame_id)
    return parse_detections(io.StringIO(text), label=label)


def stage_eval_det(pred_path, gt_path, out_path, threshold: float = 0.55,
                   interpolation: str = ALL_POINT, label: str | None = None,
                   unscored_as: float | None = None):
    preds = _load_frames(pred_path, label)
    if unscored_as is not None:
        preds = [replace(r, detections=tuple(d if d.score is not None else replace(d, score=unscored_as)
                                             for d in r.detections)) for r in preds]
    gts = _load_frames(gt_path, label)
    report = evaluate_frames(preds, gts, threshold, interpolation)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_report(out, report.to_csv(), [pred_path, gt_path])
    return report


def _num(v, places=6):
    return "nan" if v is None else f"{v:.{places}f}"


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in s)


# -- end to end --------------------------------------------------------------

@dataclass
class PipelineConfig:
    seed: int = 0
    field: dict = dc_field(default_factory=dict)
    noise: dict = dc_field(default_factory=dict)
    write_truth: bool = False
    tracker: dict = dc_field(default_factory=dict)
    views_per_side: tuple[int, ...] = (1, 3)
    augment: int = 3
    shift: int = 2
    grid: tuple[int, int] = (16, 16)
    network: dict = dc_field(default_factory=dict)
    test_fraction: float = 0.2
    cutoffs: tuple[float, ...] = DEFAULT_CUTOFFS
    iou_threshold: float = 0.55

    def __post_init__(self):
        self.views_per_side = tuple(int(v) for v in (
            self.views_per_side if isinstance(self.views_per_side, (list, tuple)) else [self.views_per_side]))
        self.grid = tuple(self.grid)
        self.cutoffs = tuple(float(c) for c in self.cutoffs)
        if any(not 0 < c < 1 for c in self.cutoffs):
            raise DataError("cutoffs must lie in (0, 1)")
        if not 0 < self.test_fraction < 1:
            raise DataError("test_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)

    def field_config(self) -> FieldConfig:
        return FieldConfig.from_dict({**self.field, "seed": self.seed})

    def noise_model(self) -> NoiseModel:
        return NoiseModel.from_dict(self.noise)

    def tracker_config(self) -> TrackerConfig:
        d = dict(self.tracker)
        if d.get("max_match_distance") is None:
            d.pop("max_match_distance", None)
        return TrackerConfig(**d)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig.from_dict({**self.network, "seed": self.seed})


def _stage(name, fn, *args, **kwargs):
    log.info("stage %s", name)
    try:
        return fn(*args, **kwargs)
    except (DataError, ArithmeticError, OSError, StaleCache) as exc:
        raise StageFailure(name, exc) from exc


def run_pipeline(config: PipelineConfig, out_dir: str | Path) -> dict:
    """simulate -> track -> select/featurize -> train -> predict -> rank."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fcfg = config.field_config()
    noise = config.noise_model()
    sim = out / "sim"
    manifest = _stage("simulate", stage_simulate, fcfg, noise, sim, config.write_truth)

    tracks, n_tracks = {}, {}
    for side in PASS_SIDES:
        _, table = _stage("track", stage_track, sim / f"plots_{side.value}.jsonl",
                          out / "track" / f"tracks_{side.value}", config.tracker_config())
        tracks[side.value] = table
        with open(table) as fh:
            n_tracks[side.value] = len(read_track_table(fh))

    det_eval = None
    if config.write_truth:
        reports = {}
        for side in PASS_SIDES:
            rep = _stage("eval-det", stage_eval_det, sim / f"pods_{side.value}.jsonl",
                         sim / f"truth_{side.value}.jsonl", out / "eval" / f"det_eval_{side.value}.csv",
                         config.iou_threshold, ALL_POINT, POD)
            reports[side.value] = rep.map
        det_eval = reports

    predictions = {}
    for n in config.views_per_side:
        tag = f"{n}-view"
        feats = _stage("featurize", stage_featurize, sim / "plots.csv",
                       {s.value: sim / f"pods_{s.value}.jsonl" for s in PASS_SIDES},
                       out / f"features_{tag}", n, tracks, config.augment, config.shift,
                       config.grid, fcfg.image_size)
        model = _stage("train", stage_train, feats, sim / "plots.csv", out / f"model_{tag}",
                       config.network_config(), config.test_fraction)
        predictions[tag] = _stage("predict", stage_predict, model, feats, sim / "plots.csv",
                                  out / f"predictions_{tag}.csv", out / f"model_{tag}" / "split.csv")
    ranking = _stage("rank", stage_rank, predictions, out / "rank", config.cutoffs)

    rows = ["model,n_test,pearson,spearman," + ",".join(
        f"sensitivity@{c},specificity@{c},accuracy@{c}" for c in config.cutoffs)]
    for tag, res in ranking.items():
        cells = [tag, str(res["n"]), _num(res["pearson"]), _num(res["spearman"])]
        for c in config.cutoffs:
            r = res["cutoffs"][str(c)]
            cells += [f"{r['sensitivity']:.6f}", f"{r['specificity']:.6f}", f"{r['accuracy']:.6f}"]
        rows.append(",".join(cells))
    _write_report(out / "comparison.csv", "\n".join(rows) + "\n", list(predictions.values()))

    summary = {
        "tool": TOOL,
        "seed": config.seed,
        "config": _jsonable(asdict(config)),
        "simulation_manifest_hash": manifest["manifest_hash"],
        "n_plots": fcfg.n_plots,
        "n_tracks": n_tracks,
        "det_eval_map": det_eval,
        "models": ranking,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
