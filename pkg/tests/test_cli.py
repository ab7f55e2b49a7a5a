import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from golden import SELECTION_TABLE
from podfusion.cli import main
from podfusion.pipeline import (
    PipelineConfig,
    load_features,
    read_predictions,
    run_pipeline,
    stage_rank,
)
from podfusion.ranking import ranking_report

SMALL = {
    "field": {"n_plots": 12},
    "views_per_side": [1],
    "augment": 1,
    "grid": [8, 8],
    "network": {"epochs": 4, "batch_size": 4},
    "test_fraction": 0.5,
}


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    import hashlib
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_table(path):
    with open(path) as fh:
        return list(csv.reader(l for l in fh if not l.startswith("#")))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--n-plots", "5", "--seed", "3", "--out-dir", str(out), "--truth", "--quiet"]) == 0
    return out


def test_simulate_writes_dataset(sim_dir):
    names = {p.name for p in sim_dir.iterdir()}
    for side in ("A", "B"):
        assert {f"plots_{side}.jsonl", f"pods_{side}.jsonl", f"truth_{side}.jsonl"} <= names
    assert {"plots.csv", "annotations.json", "manifest.json", "provenance.json"} <= names
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["tool"].startswith("podfusion ")
    assert all(sha(sim_dir / n) == h for n, h in manifest["files"].items())
    assert len(read_table(sim_dir / "plots.csv")) == 1 + 2 * 5


def test_simulate_deterministic(sim_dir, tmp_path):
    assert run("simulate", "--n-plots", 5, "--seed", 3, "--out-dir", tmp_path, "--truth", "--quiet") == 0
    assert sha(tmp_path / "manifest.json") == sha(sim_dir / "manifest.json")
    assert run("simulate", "--n-plots", 5, "--seed", 4, "--out-dir", tmp_path / "b", "--quiet") == 0
    assert sha(tmp_path / "b" / "plots.csv") != sha(sim_dir / "plots.csv")


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_simulate_unwritable_chmod(tmp_path, capsys):
    locked = tmp_path / "locked"
    locked.mkdir(mode=0o500)
    assert run("simulate", "--n-plots", 2, "--out-dir", locked / "x") != 0
    assert "error" in capsys.readouterr().err


def test_simulate_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert run("simulate", "--n-plots", 2, "--out-dir", blocker / "x") == 2
    captured = capsys.readouterr()
    assert "error" in captured.err and captured.out == ""


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "field": {"n_plots": 7}}))
    assert run("--config", cfg, "simulate", "--n-plots", 3, "--out-dir", tmp_path / "o", "--quiet") == 0
    assert len(read_table(tmp_path / "o" / "plots.csv")) == 1 + 2 * 3
    prov = json.loads((tmp_path / "o" / "provenance.json").read_text())
    assert prov["seed"] == 1
    assert run("simulate", "--config", cfg, "--seed", 9, "--out-dir", tmp_path / "p", "--quiet") == 0
    assert json.loads((tmp_path / "p" / "provenance.json").read_text())["seed"] == 9


def test_eval_det_identity(sim_dir, tmp_path):
    truth = sim_dir / "truth_A.jsonl"
    assert run("eval-det", truth, truth, "--unscored-as", 1, "--out-dir", tmp_path, "--quiet") == 0
    rows = read_table(tmp_path / "det_eval.csv")
    mrow = [r for r in rows if r[1] == "mAP"][0]
    assert float(mrow[-1]) == 1.0
    header = (tmp_path / "det_eval.csv").read_text().splitlines()[:3]
    assert header[0].startswith("# tool=podfusion") and "sha256=" in header[1]


def test_eval_det_unscored_predictions_is_data_error(sim_dir, tmp_path, capsys):
    truth = sim_dir / "truth_A.jsonl"
    assert run("eval-det", truth, truth, "--out-dir", tmp_path) == 2
    assert "score" in capsys.readouterr().err


def test_eval_det_annotation_ground_truth(sim_dir, tmp_path):
    # the VIA document labels frames of side A and side B; restrict to pods of A
    assert run("eval-det", sim_dir / "pods_A.jsonl", sim_dir / "truth_A.jsonl", "--label", "Pod",
               "--out-dir", tmp_path, "--quiet") == 0
    assert 0 < float([r for r in read_table(tmp_path / "det_eval.csv") if r[1] == "mAP"][0][-1]) <= 1


def test_rank_counts_reproduces_published_table(tmp_path):
    counts = tmp_path / "counts.csv"
    lines = ["model,cutoff,tp,tn,fp,fn"]
    lines += [f"{m},{p},{v[0]},{v[1]},{v[2]},{v[3]}" for (m, p), v in SELECTION_TABLE.items()]
    counts.write_text("\n".join(lines) + "\n")
    assert run("rank", "--counts", counts, "--out-dir", tmp_path, "--quiet") == 0
    rows = read_table(tmp_path / "ranking.csv")
    header = rows[0][1:]
    by_row = {r[0]: r[1:] for r in rows[1:]}
    for (m, p), v in SELECTION_TABLE.items():
        col = header.index(f"{m} top {round(p * 100)}%")
        assert [int(by_row[k][col]) for k in ("True Positive", "True Negative", "False Positive", "False Negative")] \
            == list(v[:4])
        assert [by_row[k][col] for k in ("Accuracy", "Sensitivity", "Specificity")] == [f"{x:.2f}" for x in v[4:]]


def test_stats(tmp_path):
    (tmp_path / "c.txt").write_text("1\n2\n3\n")
    assert run("stats", tmp_path / "c.txt", "--out-dir", tmp_path, "--quiet") == 0
    rows = read_table(tmp_path / "stats.csv")
    row = dict(zip(rows[0], rows[1]))
    assert float(row["mean"]) == 2.0 and row["n"] == "3" and float(row["std_sample"]) == 1.0


def test_stats_on_simulated_metadata(sim_dir, tmp_path):
    assert run("stats", sim_dir / "plots.csv", "--out-dir", tmp_path, "--quiet") == 0
    assert read_table(tmp_path / "stats.csv")[1][0] == "5"


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["stats"],
    ["rank", "--cutoffs", "0.2"],
    ["rank", "--counts", "a", "--predictions", "m=b"],
    ["simulate", "--n-plots", "many"],
    ["featurize", "--meta", "m.csv", "--detections", "no-equals-sign"],
])
def test_usage_errors(argv, capsys, tmp_path):
    assert main(argv + ["--out-dir", str(tmp_path)] if argv else argv) == 1
    assert "usage error" in capsys.readouterr().err


def test_rank_bad_cutoff(tmp_path):
    assert run("rank", "--predictions", "m=x.csv", "--cutoffs", "1.5", "--out-dir", tmp_path) == 1


@pytest.mark.parametrize("make", [
    lambda d: ("stats", d / "missing.txt"),
    lambda d: (d / "bad.txt").write_text("1\nfoo\n") and ("stats", d / "bad.txt"),
    lambda d: (d / "bad.jsonl").write_text("{not json\n") and ("track", d / "bad.jsonl"),
    lambda d: (d / "c.json").write_text("[1]") and ("--config", d / "c.json", "stats", d / "x"),
])
def test_data_errors(make, tmp_path, capsys):
    argv = make(tmp_path)
    assert run(*argv, "--out-dir", tmp_path) == 2
    assert capsys.readouterr().err.startswith("error")


def test_numerical_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**SMALL, "network": {"epochs": 30, "learning_rate": 1e8}}))
    assert run("--config", cfg, "pipeline", "--out-dir", tmp_path / "o") == 3
    err = capsys.readouterr().err
    assert "stage train" in err


def test_stage_labelled_failure(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**SMALL, "grid": [3, 3]}))
    code = run("--config", cfg, "pipeline", "--out-dir", tmp_path / "o")
    assert code == 2
    assert "stage train" in capsys.readouterr().err


def test_track_subcommand(sim_dir, tmp_path):
    assert run("track", sim_dir / "plots_A.jsonl", "--name", "t", "--out-dir", tmp_path, "--quiet") == 0
    rows = read_table(tmp_path / "t.csv")
    assert len(rows) - 1 == 5
    first = sha(tmp_path / "t.jsonl")
    assert run("track", sim_dir / "plots_A.jsonl", "--name", "t", "--out-dir", tmp_path, "--quiet") == 0
    assert sha(tmp_path / "t.jsonl") == first


# -- pipeline ----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipe")
    cfg = base / "config.json"
    cfg.write_text(json.dumps({**SMALL, "views_per_side": [1, 3]}))
    assert main(["--config", str(cfg), "--seed", "5", "pipeline", "--out-dir", str(base / "run"), "--quiet"]) == 0
    return base


def test_pipeline_outputs(small_run):
    run_dir = small_run / "run"
    summary = json.loads((run_dir / "summary.json").read_text())
    assert set(summary["models"]) == {"1-view", "3-view"}
    assert summary["seed"] == 5 and summary["n_plots"] == 12
    assert summary["n_tracks"] == {"A": 12, "B": 12}
    assert (run_dir / "comparison.csv").exists()
    for tag in ("1-view", "3-view"):
        assert (run_dir / "rank" / f"scatter_{tag}.svg").read_text().startswith("<svg")
        res = summary["models"][tag]
        assert res["n"] == 6 and set(res["cutoffs"]) == {"0.2", "0.3"}


def test_pipeline_rerun_identical(small_run, tmp_path):
    assert run("--config", small_run / "config.json", "--seed", 5, "pipeline", "--out-dir", tmp_path,
               "--quiet") == 0
    first = small_run / "run"
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    for rel in files:
        assert sha(first / rel) == sha(tmp_path / rel), rel


def test_pipeline_matches_individual_stages(small_run, tmp_path):
    run_dir = small_run / "run"
    summary = json.loads((run_dir / "summary.json").read_text())
    sim = tmp_path / "sim"
    assert run("simulate", "--config", small_run / "config.json", "--seed", 5, "--out-dir", sim,
               "--quiet") == 0
    assert sha(sim / "manifest.json") == sha(run_dir / "sim" / "manifest.json")
    for side in "AB":
        assert run("track", sim / f"plots_{side}.jsonl", "--name", f"tracks_{side}",
                   "--out-dir", tmp_path / "track", "--quiet") == 0
    net = ["--config", small_run / "config.json", "--seed", 5]
    preds = []
    for n in (1, 3):
        tag = f"{n}-view"
        feats = tmp_path / f"features_{tag}"
        assert run("featurize", "--meta", sim / "plots.csv", "--detections", f"A={sim / 'pods_A.jsonl'}",
                   "--detections", f"B={sim / 'pods_B.jsonl'}", "--tracks", f"A={tmp_path / 'track/tracks_A.csv'}",
                   "--tracks", f"B={tmp_path / 'track/tracks_B.csv'}", "--views-per-side", n, "--augment", 1,
                   "--grid", 8, 8, "--out-dir", feats, "--quiet") == 0
        model = tmp_path / f"model_{tag}"
        assert run("train", *net, "--features", feats / "features.csv", "--meta", sim / "plots.csv",
                   "--test-fraction", 0.5, "--out-dir", model, "--quiet") == 0
        assert run("predict", "--model", model / "model.ckpt", "--features", feats / "features.csv",
                   "--meta", sim / "plots.csv", "--split", model / "split.csv", "--output", f"p_{tag}.csv",
                   "--out-dir", tmp_path, "--quiet") == 0
        preds.append(f"{tag}={tmp_path / f'p_{tag}.csv'}")
    assert run("rank", "--predictions", preds[0], "--predictions", preds[1], "--out-dir", tmp_path / "rank",
               "--quiet") == 0
    rows = read_table(tmp_path / "rank" / "correlations.csv")
    for model, n, r, rho in rows[1:]:
        res = summary["models"][model]
        assert int(n) == res["n"]
        assert float(r) == pytest.approx(res["pearson"], abs=5e-7)
        assert float(rho) == pytest.approx(res["spearman"], abs=5e-7)
    assert (tmp_path / "rank" / "ranking.csv").read_text().splitlines()[-8:] == \
        (run_dir / "rank" / "ranking.csv").read_text().splitlines()[-8:]


def test_zero_noise_pipeline(tmp_path):
    zero = {"miss_rate": 0, "false_positive_rate": 0, "jitter_std": 0, "occlusion_spread": 0,
            "occlusion": {"base": 0, "slope": 0}}
    cfg = PipelineConfig.from_dict({**SMALL, "field": {"n_plots": 10}, "noise": zero, "write_truth": True,
                                    "network": {"epochs": 2}})
    summary = run_pipeline(cfg, tmp_path)
    assert summary["det_eval_map"] == {"A": 1.0, "B": 1.0}
    assert summary["n_tracks"] == {"A": 10, "B": 10}
    # Perfect information: the count channel of the fused features reproduces
    # every plot's pod count, so a ranking on it selects the true top plots.
    feats = load_features(tmp_path / "features_1-view" / "features.csv")
    ids, gt, _ = read_predictions(tmp_path / "predictions_1-view.csv", split=None)
    # one view per side: channel 0 of each side's grid holds that side's full count
    counts = {p: float(np.sum(x[0::3])) / (x.shape[0] // 3) for (p, s), x in feats.items() if s == 0}
    pred = [counts[p] for p in ids]
    assert np.allclose(pred, gt)
    rep = ranking_report(gt, pred, cfg.cutoffs)
    assert all(r.sensitivity == 1.0 for r in rep.cutoffs.values())
    pfile = tmp_path / "oracle.csv"
    pfile.write_text("plot_id,split,ground_truth,predicted\n" +
                     "".join(f"{i},all,{g},{p}\n" for i, g, p in zip(ids, gt, pred)))
    res = stage_rank({"oracle": pfile}, tmp_path / "oracle_rank", cfg.cutoffs, split=None)["oracle"]
    assert [c["sensitivity"] for c in res["cutoffs"].values()] == [1.0, 1.0]
    assert res["pearson"] == pytest.approx(1.0)


def test_pipeline_config_validation(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("--config", cfg, "pipeline", "--out-dir", tmp_path) == 2
    cfg.write_text(json.dumps({"cutoffs": [0.2, 1.0]}))
    assert run("--config", cfg, "pipeline", "--out-dir", tmp_path) == 2
