"""Command-line tests, driven through main() in-process.

A tiny end-to-end pipeline (simulate -> train -> eval) runs in a temp
directory; exit-code contracts are checked by provoking each error class.
"""

import json
import os

import numpy as np
import pytest

from revode.cli import build_parser, main
from revode.data import read_dataset
from revode.model import ModelConfig, init_params, save_checkpoint

# small but structurally faithful: 1-body 1-D spring, 41 grid points
SIM_BASE = [
    "simulate",
    "--system", "simple_spring", "--agents", "1", "--dim", "1",
    "--trajectories", "10", "--steps", "4000", "--seed", "5",
]
SIM_TEST_EXTRA = ["--test-trajectories", "4", "--test-steps", "4000"]
WINDOW_ARGS = [
    "--window", "0,10,25", "--test-window", "0,10,30",
    "--n-obs-min", "4", "--n-obs-max", "8",
    "--test-n-obs-min", "6", "--test-n-obs-max", "10",
]
MODEL_ARGS = [
    "--d-enc", "4", "--d-aug", "4", "--d-model", "8",
    "--ode-hidden", "8", "--dec-hidden", "8", "--scheme", "euler",
]


def run_pipeline(tmp_path, train_extra=()):
    train_jl = str(tmp_path / "train.jsonl")
    test_jl = str(tmp_path / "test.jsonl")
    outdir = str(tmp_path / "run")
    rc = main(SIM_BASE + SIM_TEST_EXTRA + ["--out", train_jl, "--test-out", test_jl])
    assert rc == 0
    rc = main(
        ["train", "--data", train_jl, "--test-data", test_jl,
         "--epochs", "3", "--batch-size", "4", "--seed", "1",
         "--outdir", outdir]
        + WINDOW_ARGS + MODEL_ARGS + list(train_extra)
    )
    assert rc == 0
    return train_jl, test_jl, outdir


# ------------------------------------------------------------------ parser

def test_parser_knows_all_subcommands():
    parser = build_parser()
    for argv in (
        ["simulate", "--system", "simple_spring"],
        ["train", "--epochs", "3"],
        ["eval", "--checkpoint", "x.json"],
        ["verify", "--suite", "lemma2"],
    ):
        args = parser.parse_args(argv)
        assert args.command == argv[0]


def test_parser_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--suite", "lemma9"])


# ---------------------------------------------------------------- simulate

def test_simulate_writes_datasets_and_config(tmp_path):
    out = str(tmp_path / "train.jsonl")
    test_out = str(tmp_path / "test.jsonl")
    rc = main(SIM_BASE + SIM_TEST_EXTRA + ["--out", out, "--test-out", test_out])
    assert rc == 0
    assert len(read_dataset(out)) == 10
    assert len(read_dataset(test_out)) == 4
    sidecar = json.loads(open(out + ".config.json").read())
    assert sidecar["seed"] == 5
    assert sidecar["schema_version"] == 1


def test_simulate_normalizes_train_and_test_together(tmp_path):
    out = str(tmp_path / "train.jsonl")
    test_out = str(tmp_path / "test.jsonl")
    main(SIM_BASE + SIM_TEST_EXTRA + ["--out", out, "--test-out", test_out])
    peak = max(
        float(np.max(np.abs(t.features())))
        for t in read_dataset(out) + read_dataset(test_out)
    )
    assert peak == pytest.approx(1.0)
    scales = {t.scale for t in read_dataset(out) + read_dataset(test_out)}
    assert len(scales) == 1


def test_simulate_is_reproducible(tmp_path):
    a, b = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
    main(SIM_BASE + ["--out", a])
    main(SIM_BASE + ["--out", b])
    assert open(a, "rb").read() == open(b, "rb").read()


def test_simulate_test_set_uses_different_seed(tmp_path):
    out = str(tmp_path / "train.jsonl")
    test_out = str(tmp_path / "test.jsonl")
    main(SIM_BASE + SIM_TEST_EXTRA + ["--out", out, "--test-out", test_out])
    train_first = read_dataset(out)[0]
    test_first = read_dataset(test_out)[0]
    assert not np.array_equal(train_first.q, test_first.q)


def test_simulate_rejects_test_without_out(tmp_path):
    rc = main(
        ["simulate", "--system", "simple_spring", "--agents", "1", "--dim", "1",
         "--trajectories", "2", "--test-trajectories", "2",
         "--out", str(tmp_path / "t.jsonl")]
    )
    assert rc == 2


# ------------------------------------------------------------------- train

def test_train_writes_all_artifacts(tmp_path):
    _, _, outdir = run_pipeline(tmp_path)
    for name in ("checkpoint.json", "losses.csv", "summary.json", "resolved_config.json"):
        assert os.path.exists(os.path.join(outdir, name)), name
    summary = json.loads(open(os.path.join(outdir, "summary.json")).read())
    for key in (
        "epochs_run", "best_epoch", "final_l_pred", "final_l_reverse",
        "final_total", "final_diag_l_reverse", "n_train", "n_val",
        "lr_retried", "test_mse", "test_bucket_mse", "test_max_error_gt_rev",
    ):
        assert key in summary, key
    assert summary["lr_retried"] is False
    assert summary["epochs_run"] <= 3


def test_train_resolved_config_reruns_identically(tmp_path):
    """The resolved config alone must reproduce the exact artifacts."""
    train_jl, test_jl, outdir = run_pipeline(tmp_path)
    resolved = json.loads(
        open(os.path.join(outdir, "resolved_config.json")).read()
    )
    cfg_path = str(tmp_path / "rerun.json")
    rerun_dir = str(tmp_path / "rerun")
    resolved["outdir"] = rerun_dir
    with open(cfg_path, "w") as fh:
        json.dump(resolved, fh)
    rc = main(["train", "--config", cfg_path])
    assert rc == 0
    orig = open(os.path.join(outdir, "checkpoint.json"), "rb").read()
    redo = open(os.path.join(rerun_dir, "checkpoint.json"), "rb").read()
    assert orig == redo
    assert (
        open(os.path.join(outdir, "losses.csv"), "rb").read()
        == open(os.path.join(rerun_dir, "losses.csv"), "rb").read()
    )


def test_train_missing_dataset_is_input_error(tmp_path):
    rc = main(["train", "--data", str(tmp_path / "nope.jsonl")] + WINDOW_ARGS)
    assert rc == 2


def test_train_rejects_malformed_window(tmp_path):
    train_jl = str(tmp_path / "train.jsonl")
    main(SIM_BASE + ["--out", train_jl])
    rc = main(["train", "--data", train_jl, "--window", "0,30"] + MODEL_ARGS)
    assert rc == 2


# -------------------------------------------------------------------- eval

def test_eval_prints_and_writes_metrics(tmp_path, capsys):
    _, test_jl, outdir = run_pipeline(tmp_path)
    metrics_path = str(tmp_path / "metrics.json")
    capsys.readouterr()  # drain the pipeline chatter
    rc = main(
        ["eval", "--checkpoint", os.path.join(outdir, "checkpoint.json"),
         "--data", test_jl, "--window", "0,10,30",
         "--n-obs-min", "6", "--n-obs-max", "10",
         "--out", metrics_path]
    )
    assert rc == 0
    printed = json.loads(capsys.readouterr().out)
    stored = json.loads(open(metrics_path).read())
    assert printed == stored
    assert stored["n_samples"] == 4
    assert stored["mse"] >= 0.0
    assert stored["mse_hundredths"] == pytest.approx(stored["mse"] * 100.0)
    assert os.path.exists(metrics_path + ".config.json")


def test_eval_feature_width_mismatch_is_artifact_error(tmp_path):
    train_jl = str(tmp_path / "train.jsonl")
    main(SIM_BASE + ["--out", train_jl])
    ckpt = str(tmp_path / "wide.json")
    wide = ModelConfig(d_obs=4, d_enc=4, d_aug=4, d_model=8,
                       ode_hidden=8, dec_hidden=8)
    save_checkpoint(ckpt, init_params(wide, 0), wide)
    rc = main(
        ["eval", "--checkpoint", ckpt, "--data", train_jl,
         "--window", "0,10,25", "--n-obs-min", "4", "--n-obs-max", "8"]
    )
    assert rc == 5


def test_eval_missing_checkpoint(tmp_path):
    train_jl = str(tmp_path / "train.jsonl")
    main(SIM_BASE + ["--out", train_jl])
    rc = main(["eval", "--checkpoint", str(tmp_path / "gone.json"),
               "--data", train_jl])
    assert rc == 2  # missing input files are configuration errors


# ------------------------------------------------------------------ verify

def test_verify_suite_prints_assertion_lines(tmp_path, capsys):
    out = str(tmp_path / "report.json")
    rc = main(["verify", "--suite", "lemma2", "--json", out])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "[PASS] lemma2." in stdout
    assert stdout.strip().endswith("verification: PASS")
    doc = json.loads(open(out).read())
    assert doc["results"][0]["suite"] == "lemma2"


# ------------------------------------------------------------ config files

def test_config_file_unknown_key_is_input_error(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"schema_version": 1, "mystery_knob": 3}))
    rc = main(["verify", "--suite", "lemma2"])  # sanity: verify itself works
    assert rc == 0
    rc = main(["train", "--config", str(cfg)])
    assert rc == 2


def test_config_file_wrong_schema_version(tmp_path):
    cfg = tmp_path / "old.json"
    cfg.write_text(json.dumps({"schema_version": 0, "epochs": 2}))
    rc = main(["train", "--config", str(cfg)])
    assert rc == 2
