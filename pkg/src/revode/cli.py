"""Command-line surface: simulate, train, eval, verify.

Exit codes: 0 success, 1 verification assertion failed, 2 bad
configuration or input, 3 simulation/integration failure, 4 training
divergence (after one retry at half the learning rate), 5 artifact
mismatch (checkpoint incompatible with requested shapes).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .configs import (
    CONFIG_SCHEMA_VERSION,
    DESK_ALPHA_GRID,
    DESK_DATA_SEED_TEST,
    DESK_DATA_SEED_TRAIN,
    DESK_TEST_RAW_STEPS,
    DESK_TEST_TRAJECTORIES,
    DESK_TEST_WINDOW,
    DESK_TRAIN_RAW_STEPS,
    DESK_TRAIN_TRAJECTORIES,
    DESK_TRAIN_WINDOW,
    EVAL_DEFAULTS,
    SIMULATE_DEFAULTS,
    TRAIN_DEFAULTS,
    VERIFY_DEFAULTS,
    load_config_file,
    resolve_options,
    write_resolved_config,
)
from .data import (
    Trajectory,
    build_observation_sets,
    build_trajectory,
    normalize_trajectories,
    read_dataset,
    write_dataset,
)
from .errors import (
    ArtifactMismatchError,
    ConfigurationError,
    DatasetFormatError,
    IntegrationError,
    RevodeError,
    ShapeError,
    TrainingDivergedError,
)
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .systems import SYSTEM_KINDS, SystemSpec
from .training import TrainSettings, evaluate, train, write_loss_report
from .verify import SUITES, run_suite

_EXIT_BY_ERROR = (
    (TrainingDivergedError, 4),
    (ArtifactMismatchError, 5),
    (ShapeError, 5),
    (IntegrationError, 3),
    (DatasetFormatError, 2),
    (ConfigurationError, 2),
)


def _exit_code_for(exc: RevodeError) -> int:
    for cls, code in _EXIT_BY_ERROR:
        if isinstance(exc, cls):
            return code
    return 2


def _json_dump(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- simulate

def _add_simulate_parser(sub):
    p = sub.add_parser("simulate", help="generate trajectory datasets")
    p.add_argument("--config", default=None)
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--system", choices=SYSTEM_KINDS, default=None)
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--trajectories", type=int, default=None)
    p.add_argument("--test-trajectories", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--test-steps", type=int, default=None)
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--scheme", choices=("euler", "heun", "rk4"), default=None)
    p.add_argument("--edge-prob", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--k1", type=float, default=None)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--damped-form", choices=("anchored", "pairwise"), default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--test-out", default=None)


_DESK_SIMULATE = {
    "system": "simple_spring",
    "agents": 1,
    "dim": 1,
    "trajectories": DESK_TRAIN_TRAJECTORIES,
    "test_trajectories": DESK_TEST_TRAJECTORIES,
    "steps": DESK_TRAIN_RAW_STEPS,
    "test_steps": DESK_TEST_RAW_STEPS,
    "seed": DESK_DATA_SEED_TRAIN,
    "out": "train.jsonl",
    "test_out": "test.jsonl",
}


def cmd_simulate(args) -> int:
    defaults = dict(SIMULATE_DEFAULTS)
    if args.desk_scale:
        defaults.update(_DESK_SIMULATE)
    config = (
        load_config_file(args.config, set(defaults)) if args.config else None
    )
    cli = {
        "system": args.system, "agents": args.agents, "dim": args.dim,
        "trajectories": args.trajectories,
        "test_trajectories": args.test_trajectories,
        "dt": args.dt, "steps": args.steps, "test_steps": args.test_steps,
        "subsample": args.subsample, "scheme": args.scheme,
        "edge_prob": args.edge_prob, "noise": args.noise, "seed": args.seed,
        "k": args.k, "gamma": args.gamma, "k1": args.k1, "omega": args.omega,
        "damped_form": args.damped_form,
        "out": args.out, "test_out": args.test_out,
    }
    opt = resolve_options(defaults, config, cli)
    if opt["trajectories"] < 1:
        raise ConfigurationError("--trajectories must be at least 1")
    if opt["test_trajectories"] and not opt["test_out"]:
        raise ConfigurationError("--test-trajectories requires --test-out")

    spec_kwargs = dict(kind=opt["system"], n_agents=opt["agents"], dim=opt["dim"])
    for name in ("k", "gamma", "k1", "omega", "damped_form"):
        if opt[name] is not None:
            spec_kwargs[name] = opt[name]
    spec = SystemSpec(**spec_kwargs)

    steps = opt["steps"]
    if steps is None:
        from .data import SIM_DEFAULTS
        steps = 60 * (opt["subsample"] or SIM_DEFAULTS[spec.kind][2])
    common = dict(
        dt=opt["dt"], subsample_every=opt["subsample"], scheme=opt["scheme"],
        edge_prob=opt["edge_prob"],
    )
    train_trajs = [
        build_trajectory(
            spec, seed=opt["seed"], index=i, raw_steps=steps,
            noise_sigma=opt["noise"], **common,
        )
        for i in range(opt["trajectories"])
    ]
    groups = [train_trajs]
    if opt["test_trajectories"]:
        test_seed = (
            DESK_DATA_SEED_TEST
            if args.desk_scale and opt["seed"] == DESK_DATA_SEED_TRAIN
            else opt["seed"] + 1
        )
        test_steps = opt["test_steps"] or steps
        # held-out trajectories are clean: observation noise is a training
        # corruption, not part of the target signal
        test_trajs = [
            build_trajectory(
                spec, seed=test_seed, index=i, raw_steps=test_steps, **common
            )
            for i in range(opt["test_trajectories"])
        ]
        groups.append(test_trajs)

    groups, scale = normalize_trajectories(groups)
    n = write_dataset(opt["out"], groups[0])
    print(f"wrote {n} trajectories to {opt['out']} (scale {scale:.6g})")
    if opt["test_trajectories"]:
        n_test = write_dataset(opt["test_out"], groups[1])
        print(f"wrote {n_test} trajectories to {opt['test_out']}")
    write_resolved_config(str(opt["out"]) + ".config.json", opt)
    return 0


# ------------------------------------------------------------------- train

def _add_train_parser(sub):
    p = sub.add_parser("train", help="fit a model on a trajectory dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--data", default=None)
    p.add_argument("--test-data", default=None)
    p.add_argument("--loss-variant", choices=("treat", "gt_rev", "rev2", "none"),
                   default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--window", default=None, help="lo,split,hi recorded indices")
    p.add_argument("--test-window", default=None)
    p.add_argument("--n-obs-min", type=int, default=None)
    p.add_argument("--n-obs-max", type=int, default=None)
    p.add_argument("--test-n-obs-min", type=int, default=None)
    p.add_argument("--test-n-obs-max", type=int, default=None)
    p.add_argument("--obs-seed", type=int, default=None)
    p.add_argument("--test-obs-seed", type=int, default=None)
    p.add_argument("--d-enc", type=int, default=None)
    p.add_argument("--d-aug", type=int, default=None)
    p.add_argument("--d-model", type=int, default=None)
    p.add_argument("--ode-hidden", type=int, default=None)
    p.add_argument("--dec-hidden", type=int, default=None)
    p.add_argument("--scheme", choices=("euler", "heun", "rk4"), default=None)
    p.add_argument("--outdir", default=None)


# The generic default keeps the classical latent solver; the desk preset
# swaps in the first-order one so the reverse-rollout penalty carries a
# usable signal at desk step sizes (see configs.desk_model_config).
_DESK_TRAIN = {"scheme": "euler"}


def _parse_window(value):
    if isinstance(value, (list, tuple)):
        parts = [int(v) for v in value]
    else:
        parts = [int(v) for v in str(value).split(",")]
    if len(parts) != 3:
        raise ConfigurationError(f"window must be lo,split,hi; got {value!r}")
    return tuple(parts)


def _load_trajectories(path) -> list:
    items = read_dataset(path)
    trajs = [item for item in items if isinstance(item, Trajectory)]
    if not trajs:
        raise DatasetFormatError(f"{path} contains no trajectory records")
    return trajs


def cmd_train(args) -> int:
    defaults = dict(TRAIN_DEFAULTS)
    if args.desk_scale:
        defaults.update(_DESK_TRAIN)
    config = load_config_file(args.config, set(defaults)) if args.config else None
    cli = {
        "data": args.data, "test_data": args.test_data,
        "loss_variant": args.loss_variant, "alpha": args.alpha, "lr": args.lr,
        "epochs": args.epochs, "batch_size": args.batch_size,
        "patience": args.patience, "val_fraction": args.val_fraction,
        "weight_decay": args.weight_decay, "seed": args.seed,
        "window": args.window, "test_window": args.test_window,
        "n_obs_min": args.n_obs_min, "n_obs_max": args.n_obs_max,
        "test_n_obs_min": args.test_n_obs_min,
        "test_n_obs_max": args.test_n_obs_max,
        "obs_seed": args.obs_seed, "test_obs_seed": args.test_obs_seed,
        "d_enc": args.d_enc, "d_aug": args.d_aug, "d_model": args.d_model,
        "ode_hidden": args.ode_hidden, "dec_hidden": args.dec_hidden,
        "scheme": args.scheme, "outdir": args.outdir,
    }
    opt = resolve_options(defaults, config, cli)

    trajs = _load_trajectories(opt["data"])
    window = _parse_window(opt["window"])
    obs_train = build_observation_sets(
        trajs, window=window,
        n_obs_min=opt["n_obs_min"], n_obs_max=opt["n_obs_max"],
        obs_seed=opt["obs_seed"],
    )
    d_obs = obs_train[0].d
    model = ModelConfig(
        d_obs=d_obs, d_enc=opt["d_enc"], d_aug=opt["d_aug"],
        d_model=opt["d_model"], ode_hidden=opt["ode_hidden"],
        dec_hidden=opt["dec_hidden"], scheme=opt["scheme"],
    )
    settings = TrainSettings(
        model=model, loss_variant=opt["loss_variant"], alpha=opt["alpha"],
        lr=opt["lr"], epochs=opt["epochs"], batch_size=opt["batch_size"],
        patience=opt["patience"], val_fraction=opt["val_fraction"],
        weight_decay=opt["weight_decay"], seed=opt["seed"],
    )

    try:
        result = train(obs_train, settings)
        retried = False
    except TrainingDivergedError:
        retried = True
        print(
            f"training diverged at lr={settings.lr}; retrying once at "
            f"lr={settings.lr / 2}", file=sys.stderr,
        )
        settings.lr /= 2
        result = train(obs_train, settings)  # a second divergence propagates

    os.makedirs(opt["outdir"], exist_ok=True)
    ckpt_path = os.path.join(opt["outdir"], "checkpoint.json")
    save_checkpoint(
        ckpt_path, result.params, model,
        extra={"scale": trajs[0].scale, "loss_variant": opt["loss_variant"],
               "alpha": opt["alpha"], "seed": opt["seed"]},
    )
    write_loss_report(os.path.join(opt["outdir"], "losses.csv"), result.history)

    summary = {
        "epochs_run": len(result.history),
        "best_epoch": result.best_epoch,
        "final_l_pred": result.history[-1]["l_pred"],
        "final_l_reverse": result.history[-1]["l_reverse"],
        "final_total": result.history[-1]["total"],
        "final_diag_l_reverse": result.final_diag_l_reverse,
        "n_train": result.n_train,
        "n_val": result.n_val,
        "lr_retried": retried,
    }
    if opt["test_data"]:
        test_trajs = _load_trajectories(opt["test_data"])
        obs_test = build_observation_sets(
            test_trajs, window=_parse_window(opt["test_window"]),
            n_obs_min=opt["test_n_obs_min"], n_obs_max=opt["test_n_obs_max"],
            obs_seed=opt["test_obs_seed"],
        )
        report = evaluate(result.params, obs_test, model)
        summary["test_mse"] = report.mse
        summary["test_mse_hundredths"] = report.mse * 100.0
        summary["test_bucket_mse"] = {str(k): v for k, v in report.bucket_mse.items()}
        summary["test_max_error_gt_rev"] = report.max_error_gt_rev
    _json_dump(os.path.join(opt["outdir"], "summary.json"), summary)
    opt["window"] = list(window)
    opt["test_window"] = list(_parse_window(opt["test_window"]))
    write_resolved_config(os.path.join(opt["outdir"], "resolved_config.json"), opt)
    print(
        f"trained {opt['loss_variant']} (alpha={opt['alpha']}) for "
        f"{summary['epochs_run']} epochs; outputs in {opt['outdir']}"
    )
    return 0


# -------------------------------------------------------------------- eval

def _add_eval_parser(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--window", default=None)
    p.add_argument("--n-obs-min", type=int, default=None)
    p.add_argument("--n-obs-max", type=int, default=None)
    p.add_argument("--obs-seed", type=int, default=None)
    p.add_argument("--out", default=None)


def cmd_eval(args) -> int:
    defaults = dict(EVAL_DEFAULTS)
    config = load_config_file(args.config, set(defaults)) if args.config else None
    cli = {
        "checkpoint": args.checkpoint, "data": args.data, "window": args.window,
        "n_obs_min": args.n_obs_min, "n_obs_max": args.n_obs_max,
        "obs_seed": args.obs_seed, "out": args.out,
    }
    opt = resolve_options(defaults, config, cli)
    params, model, extra = load_checkpoint(opt["checkpoint"])
    trajs = _load_trajectories(opt["data"])
    obs = build_observation_sets(
        trajs, window=_parse_window(opt["window"]),
        n_obs_min=opt["n_obs_min"], n_obs_max=opt["n_obs_max"],
        obs_seed=opt["obs_seed"],
    )
    if obs[0].d != model.d_obs:
        raise ArtifactMismatchError(
            f"checkpoint expects {model.d_obs} features, dataset has {obs[0].d}"
        )
    report = evaluate(params, obs, model)
    metrics = {
        "mse": report.mse,
        "mse_hundredths": report.mse * 100.0,
        "bucket_mse": {str(k): v for k, v in report.bucket_mse.items()},
        "max_error_gt_rev": report.max_error_gt_rev,
        "n_targets": report.n_targets,
        "n_samples": len(obs),
    }
    if opt["out"]:
        _json_dump(opt["out"], metrics)
        write_resolved_config(str(opt["out"]) + ".config.json", opt)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


# ------------------------------------------------------------------ verify

def _add_verify_parser(sub):
    p = sub.add_parser("verify", help="run the theory verification suites")
    p.add_argument("--suite", choices=SUITES + ("all",), default=None)
    p.add_argument("--json", dest="out", default=None)


def cmd_verify(args) -> int:
    opt = resolve_options(
        dict(VERIFY_DEFAULTS), None, {"suite": args.suite, "out": args.out}
    )
    results = run_suite(opt["suite"])
    all_passed = True
    for result in results:
        for assertion in result.assertions:
            status = "PASS" if assertion.passed else "FAIL"
            print(
                f"[{status}] {result.suite}.{assertion.name}: "
                f"{assertion.value:.6g}  ({assertion.detail})"
            )
        all_passed &= result.passed
    if opt["out"]:
        _json_dump(opt["out"], {"results": [r.to_jsonable() for r in results]})
    print("verification:", "PASS" if all_passed else "FAIL")
    return 0 if all_passed else 1


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revode",
        description="Reversible-dynamics laboratory: simulators, graph ODE "
        "training with reversal regularization, and theory checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate_parser(sub)
    _add_train_parser(sub)
    _add_eval_parser(sub)
    _add_verify_parser(sub)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except RevodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
