"""Command-line entry point: ``podfusion <subcommand> ...``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Logs go to stderr; results go to files under ``--out-dir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .deteval import ALL_POINT, ELEVEN_POINT
from .errors import DataError, NumericalError, PodfusionError
from .pipeline import (
    PipelineConfig,
    StageFailure,
    stage_eval_det,
    stage_featurize,
    stage_predict,
    stage_rank,
    stage_rank_counts,
    stage_simulate,
    stage_stats,
    stage_track,
    stage_train,
    run_pipeline,
)
from .regressor import NetworkConfig
from .simulator import FieldConfig, NoiseModel
from .tracker import TrackerConfig

log = logging.getLogger("podfusion")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pairs(values, what) -> dict[str, str]:
    out = {}
    for v in values or []:
        key, sep, path = v.partition("=")
        if not sep:
            raise UsageError(f"{what} expects SIDE=PATH, got {v!r}")
        out[key] = path
    return out


def _global_flags(p, suppress=None):
    def d(v):
        return suppress if suppress is not None else v
    p.add_argument("--config", default=d(None), help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=d(None))
    p.add_argument("--out-dir", default=d("."))
    p.add_argument("--quiet", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="podfusion", description="Multi-view pod counting pipeline.")
    _global_flags(p)
    # the same flags after the subcommand; SUPPRESS keeps them from
    # clobbering values given before it
    common = _Parser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    p.add_argument("--version", action="version", version=f"podfusion {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic field")
    s.add_argument("--n-plots", type=int)
    s.add_argument("--occlusion", type=float, help="per-view occlusion fraction")
    s.add_argument("--no-noise", action="store_true")
    s.add_argument("--truth", action="store_true", help="also write noise-free detections")

    s = sub.add_parser("track", parents=[common], help="track plot boxes across frames")
    s.add_argument("detections")
    s.add_argument("--name", default="tracks")
    s.add_argument("--expiry-frames", type=int)
    s.add_argument("--max-distance", type=float)

    s = sub.add_parser("eval-det", parents=[common], help="AP/mAP of detections against ground truth")
    s.add_argument("predictions")
    s.add_argument("ground_truth")
    s.add_argument("--threshold", type=float, default=0.55)
    s.add_argument("--interpolation", choices=[ALL_POINT, ELEVEN_POINT], default=ALL_POINT)
    s.add_argument("--label")
    s.add_argument("--unscored-as", type=float, metavar="SCORE",
                   help="score given to unscored predictions (default: reject them)")

    s = sub.add_parser("featurize", parents=[common], help="select frames and build heatmap grids")
    s.add_argument("--meta", required=True, help="plot metadata CSV")
    s.add_argument("--detections", action="append", required=True, metavar="SIDE=PATH")
    s.add_argument("--tracks", action="append", metavar="SIDE=PATH")
    s.add_argument("--views-per-side", type=int, default=1)
    s.add_argument("--augment", type=int, default=1)
    s.add_argument("--shift", type=int, default=2)
    s.add_argument("--grid", type=int, nargs=2, default=(16, 16), metavar=("W", "H"))
    s.add_argument("--image-size", type=int, nargs=2, default=(640, 360), metavar=("W", "H"))

    s = sub.add_parser("train", parents=[common], help="train the count regressor")
    s.add_argument("--features", required=True)
    s.add_argument("--meta", required=True)
    s.add_argument("--split", help="existing split CSV (plot_id,split)")
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.add_argument("--epochs", type=int)

    s = sub.add_parser("predict", parents=[common], help="predict per-plot counts")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--meta", required=True)
    s.add_argument("--split")
    s.add_argument("--output", default="predictions.csv")

    s = sub.add_parser("rank", parents=[common], help="correlations and selection metrics")
    s.add_argument("--predictions", action="append", metavar="MODEL=PATH")
    s.add_argument("--counts", help="confusion counts CSV (model,cutoff,tp,tn,fp,fn)")
    s.add_argument("--cutoffs", type=float, nargs="+")
    s.add_argument("--all-plots", action="store_true", help="rank every plot, not just the test split")

    s = sub.add_parser("stats", parents=[common], help="summary statistics of pod counts")
    s.add_argument("counts")

    sub.add_parser("pipeline", parents=[common], help="run every stage end to end")
    return p


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"config {path}: expected a JSON object")
    return doc


def _run(args) -> None:
    cfg = _load_config(args.config)
    out = Path(args.out_dir)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)

    if args.command == "simulate":
        fd = dict(cfg.get("field", {}), seed=seed)
        if args.n_plots is not None:
            fd["n_plots"] = args.n_plots
        nd = dict(cfg.get("noise", {}))
        if args.occlusion is not None:
            nd["occlusion"] = {"base": args.occlusion, "slope": 0.0}
        noise = NoiseModel.none() if args.no_noise else NoiseModel.from_dict(nd)
        manifest = stage_simulate(FieldConfig.from_dict(fd), noise, out,
                                  args.truth or cfg.get("write_truth", False))
        log.info("manifest hash %s", manifest["manifest_hash"])
    elif args.command == "track":
        td = dict(cfg.get("tracker", {}))
        if args.expiry_frames is not None:
            td["expiry_frames"] = args.expiry_frames
        if args.max_distance is not None:
            td["max_match_distance"] = args.max_distance
        if td.get("max_match_distance") is None:
            td.pop("max_match_distance", None)
        stage_track(args.detections, out / args.name, TrackerConfig(**td))
    elif args.command == "eval-det":
        rep = stage_eval_det(args.predictions, args.ground_truth, out / "det_eval.csv",
                             args.threshold, args.interpolation, args.label, args.unscored_as)
        log.info("mAP %.6f", rep.map)
    elif args.command == "featurize":
        stage_featurize(args.meta, _pairs(args.detections, "--detections"), out, args.views_per_side,
                        _pairs(args.tracks, "--tracks") or None, args.augment, args.shift,
                        tuple(args.grid), tuple(args.image_size))
    elif args.command == "train":
        nd = dict(cfg.get("network", {}), seed=seed)
        if args.epochs is not None:
            nd["epochs"] = args.epochs
        stage_train(args.features, args.meta, out, NetworkConfig.from_dict(nd),
                    args.test_fraction, args.split)
    elif args.command == "predict":
        stage_predict(args.model, args.features, args.meta, out / args.output, args.split)
    elif args.command == "rank":
        if bool(args.predictions) == bool(args.counts):
            raise UsageError("rank needs exactly one of --predictions or --counts")
        if args.counts:
            stage_rank_counts(args.counts, out / "ranking.csv")
        else:
            cutoffs = tuple(args.cutoffs or cfg.get("cutoffs", (0.2, 0.3)))
            if any(not 0 < c < 1 for c in cutoffs):
                raise UsageError("cutoffs must lie in (0, 1)")
            stage_rank(_pairs(args.predictions, "--predictions"), out, cutoffs,
                       None if args.all_plots else "test")
    elif args.command == "stats":
        stage_stats(args.counts, out / "stats.csv")
    elif args.command == "pipeline":
        pc = PipelineConfig.from_dict(dict(cfg, seed=seed))
        summary = run_pipeline(pc, out)
        for tag, res in summary["models"].items():
            log.info("%s: pearson %s", tag, res["pearson"])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        _run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _code(exc.error)
    except (PodfusionError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _code(exc)
    return EXIT_OK


def _code(exc: BaseException) -> int:
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, ArithmeticError) and not isinstance(exc, DataError):
        return EXIT_NUMERICAL
    return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
