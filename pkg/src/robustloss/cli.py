"""Command-line interface.

Subcommands
-----------
curves        sample a learning curve, the matching initial-z_k histogram,
              and the overlap metric; emits plot-ready CSV
solve-bias    solve for the output bias that hits a target mean activation
inject-noise  resample a fraction of labels and save the noisy dataset
train         run a sweep (losses x noise levels x seeds) from a JSON config
eval          score a saved checkpoint on a dataset

Exit codes: 0 ok, 1 I/O or malformed file, 2 config/usage, 3 solver failure,
4 training divergence.  Every output file is a pure function of (config,
seed), so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, bias, data, losses, trainer
from .errors import ConfigError, DivergenceError, ParseError, SolverError
from .numerics import RngStream

# child-stream key for label-noise injection; the trainer itself uses 0 and 1
_NOISE_STREAM = 2


def _slug(loss_key: str) -> str:
    return loss_key.replace(":", "-").replace("=", "").replace(",", "_")


def _run_id(loss_key: str, eta: float, seed: int) -> str:
    return f"{_slug(loss_key)}_eta{eta:g}_seed{seed}"


# ---------------------------------------------------------------------------
# dataset construction shared by the subcommands
# ---------------------------------------------------------------------------


def _load_path_dataset(path: str, label_column: str) -> data.Dataset:
    path = Path(path)
    if path.is_dir():
        return data.load_dataset(path)
    if path.suffix == ".csv":
        return data.load_csv(path, label_column)
    raise ConfigError(f"{path}: expected a saved dataset directory or a .csv file")


def _build_datasets(cfg: dict) -> tuple[data.Dataset, data.Dataset | None]:
    kind = cfg.get("kind")
    if kind == "synth":
        for field in ("classes", "dim", "separation", "train_per_class", "test_per_class"):
            if field not in cfg:
                raise ConfigError(f"synth dataset config is missing {field!r}")
        total = int(cfg["train_per_class"]) + int(cfg["test_per_class"])
        full = data.synth_blobs(
            int(cfg["classes"]),
            total,
            int(cfg["dim"]),
            float(cfg["separation"]),
            RngStream(int(cfg.get("seed", 0))),
        )
        return data.split_per_class(full, int(cfg["train_per_class"]))
    if kind == "dir":
        train_ds = data.load_dataset(cfg["train"])
        test_ds = data.load_dataset(cfg["test"]) if "test" in cfg else None
        return _align_classes(train_ds, test_ds)
    if kind == "csv":
        label_column = cfg.get("label_column", "label")
        train_ds = data.load_csv(cfg["train"], label_column)
        test_ds = data.load_csv(cfg["test"], label_column) if "test" in cfg else None
        return _align_classes(train_ds, test_ds)
    if kind == "idx":
        train_ds = data.load_idx(cfg["train_images"], cfg["train_labels"])
        test_ds = None
        if "test_images" in cfg:
            test_ds = data.load_idx(cfg["test_images"], cfg["test_labels"])
        return _align_classes(train_ds, test_ds)
    raise ConfigError(f"unknown dataset kind {kind!r}; expected synth, dir, csv, or idx")


def _align_classes(train_ds, test_ds):
    # class counts inferred from labels can disagree between files
    if test_ds is not None and test_ds.n_classes != train_ds.n_classes:
        c = max(train_ds.n_classes, test_ds.n_classes)
        train_ds = replace(train_ds, n_classes=c)
        test_ds = replace(test_ds, n_classes=c)
    return train_ds, test_ds


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


def cmd_curves(args) -> int:
    spec = losses.parse_loss_key(args.loss, args.classes)
    grid = np.linspace(args.grid_min, args.grid_max, args.grid_points)
    rng = RngStream(args.seed)
    table = analysis.learning_curve(spec, args.classes, grid, args.samples, rng.child(0))
    edges = np.linspace(args.grid_min, args.grid_max, args.hist_bins + 1)
    hist = analysis.initial_histogram(args.classes, args.hist_eps, args.samples, edges, rng.child(1))
    overlap = analysis.overlap_metric(spec, args.classes, args.hist_eps, args.samples, rng.child(2))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    slug = _slug(table.loss_key)
    curve_path = out / f"curve_{slug}_c{args.classes}.csv"
    hist_path = out / f"histogram_c{args.classes}_eps{args.hist_eps:g}.csv"
    overlap_path = out / f"overlap_{slug}_c{args.classes}_eps{args.hist_eps:g}.csv"
    analysis.write_curve_csv(table, curve_path)
    analysis.write_histogram_csv(hist, hist_path)
    with open(overlap_path, "w") as f:
        f.write("loss,n_classes,epsilon,n_samples,overlap\n")
        f.write(
            f"{table.loss_key},{args.classes},{args.hist_eps:g},{args.samples},{overlap!r}\n"
        )
    print(json.dumps({"curve": str(curve_path), "histogram": str(hist_path),
                      "overlap_csv": str(overlap_path), "overlap": overlap}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# solve-bias
# ---------------------------------------------------------------------------


def cmd_solve_bias(args) -> int:
    try:
        problem = bias.BiasProblem(
            n_classes=args.classes,
            target_mean_activation=args.target,
            n_samples=args.samples,
            tolerance=args.tolerance,
            bracket=(args.bracket_lo, args.bracket_hi),
        )
    except ConfigError as exc:
        raise SolverError(str(exc)) from exc
    epsilon = bias.solve_bias(problem, RngStream(args.seed))
    achieved = bias.estimate_mean_correct_activation(
        args.classes, epsilon, args.samples, RngStream(args.seed, 1)
    )
    print(
        json.dumps(
            {
                "n_classes": args.classes,
                "target_mean_activation": args.target,
                "epsilon": epsilon,
                "achieved_mean_activation": achieved,
                "n_samples": args.samples,
            },
            sort_keys=True,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# inject-noise
# ---------------------------------------------------------------------------


def cmd_inject_noise(args) -> int:
    ds = _load_path_dataset(args.data, args.label_column)
    noisy = data.inject_symmetric_noise(ds, args.eta, RngStream(args.seed, _NOISE_STREAM))
    out = Path(args.out)
    data.save_dataset(noisy, out, manifest_extra={"eta": args.eta, "seed": args.seed})
    with open(out / "manifest.json") as f:
        print(f.read(), end="")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_REQUIRED_CONFIG_KEYS = ("dataset", "losses", "seeds", "trainer")


def _load_experiment_config(args) -> dict:
    if not args.config:
        raise ConfigError("train requires --config pointing at a JSON experiment file")
    with open(args.config) as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.config}: invalid JSON: {exc}") from exc
    for key in _REQUIRED_CONFIG_KEYS:
        if key not in cfg:
            raise ConfigError(f"{args.config}: missing required key {key!r}")
    cfg.setdefault("noise_levels", [0.0])
    cfg.setdefault("standardize", True)
    cfg.setdefault("out", "runs")
    if args.out is not None:
        cfg["out"] = args.out
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    if not cfg["losses"]:
        raise ConfigError("config needs at least one loss")
    if not cfg["seeds"]:
        raise ConfigError("config needs at least one seed")
    for eta in cfg["noise_levels"]:
        if not 0.0 <= float(eta) <= 1.0:
            raise ConfigError(f"noise level {eta} outside [0, 1]")
    tr = cfg["trainer"]
    for key in ("hidden", "epochs", "schedule"):
        if key not in tr:
            raise ConfigError(f"trainer config is missing {key!r}")
    return cfg


def _trainer_config(tr: dict, spec: losses.LossSpec, seed: int) -> trainer.TrainConfig:
    sched = tr["schedule"]
    return trainer.TrainConfig(
        loss=spec,
        epochs=int(tr["epochs"]),
        schedule=trainer.Schedule(
            kind=sched.get("kind", "exponential"),
            initial_lr=float(sched["initial_lr"]),
            decay=float(sched.get("decay", 0.95)),
            milestones=tuple(sched.get("milestones", ())),
        ),
        batch_size=int(tr.get("batch_size", 32)),
        momentum=float(tr.get("momentum", 0.95)),
        weight_decay=float(tr.get("weight_decay", 0.0)),
        seed=seed,
        shuffle=bool(tr.get("shuffle", True)),
    )


def _execute_run(payload: dict) -> dict:
    """One (loss, eta, seed) training run; module-level so it pickles to workers."""
    train_ds, test_ds = _build_datasets(payload["dataset"])
    if payload["standardize"]:
        others = [test_ds] if test_ds is not None else []
        train_ds, transformed = data.standardize(train_ds, others)
        if test_ds is not None:
            test_ds = transformed[0]
    eta, seed, loss_key = payload["eta"], payload["seed"], payload["loss"]
    if eta > 0.0:
        train_ds = data.inject_symmetric_noise(train_ds, eta, RngStream(seed, _NOISE_STREAM))
    spec = losses.parse_loss_key(loss_key, train_ds.n_classes)
    cfg = _trainer_config(payload["trainer"], spec, seed)
    run_id = _run_id(loss_key, eta, seed)
    out = Path(payload["out"])
    try:
        model, history = trainer.train(train_ds, test_ds, list(payload["trainer"]["hidden"]), cfg)
    except DivergenceError as exc:
        raise DivergenceError(f"run {run_id}: {exc}") from exc
    trainer.write_metrics_csv(history, out / f"metrics_{run_id}.csv")
    trainer.save_model(model, out / f"model_{run_id}.bin")
    return {"run_id": run_id, "loss": loss_key, "eta": eta, "seed": seed}


def cmd_train(args) -> int:
    cfg = _load_experiment_config(args)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    payloads = [
        {
            "dataset": cfg["dataset"],
            "standardize": cfg["standardize"],
            "trainer": cfg["trainer"],
            "out": str(out),
            "loss": str(loss_key),
            "eta": float(eta),
            "seed": int(seed),
        }
        for loss_key in cfg["losses"]
        for eta in cfg["noise_levels"]
        for seed in cfg["seeds"]
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_execute_run, p) for p in payloads]
            runs = [f.result() for f in futures]
    else:
        runs = [_execute_run(p) for p in payloads]

    # the summary is recomputed from the per-run CSVs, so the two always agree
    summary: dict = {}
    for loss_key in cfg["losses"]:
        per_eta = {}
        for eta in cfg["noise_levels"]:
            histories = [
                trainer.read_metrics_csv(
                    out / f"metrics_{_run_id(str(loss_key), float(eta), int(seed))}.csv"
                )
                for seed in cfg["seeds"]
            ]
            per_eta[f"{float(eta):g}"] = trainer.summarize_finals(histories)
        summary[str(loss_key)] = per_eta
    report = {"runs": runs, "summary": summary}
    with open(out / "summary.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps({"runs": len(runs), "summary": str(out / "summary.json")}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    model = trainer.load_model(args.model)
    ds = _load_path_dataset(args.data, args.label_column)
    accuracy = trainer.evaluate(model, ds, against_clean=args.against_clean)
    print(
        json.dumps(
            {
                "accuracy": accuracy,
                "against_clean": args.against_clean,
                "n_examples": ds.n_examples,
                "masked_count": int(ds.noise_mask.sum()),
            },
            sort_keys=True,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustloss",
        description="Noise-robust loss diagnostics, bias solving, and MLP training sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    # fresh parent per subcommand: argparse parents share action objects, so a
    # set_defaults on one subparser would otherwise leak into the others
    def common(seed_default=0, out_default="."):
        parent = argparse.ArgumentParser(add_help=False)
        parent.add_argument("--seed", type=int, default=seed_default, help="root random seed")
        parent.add_argument("--out", default=out_default, help="output directory")
        return parent

    p = sub.add_parser("curves", parents=[common()], help="emit learning-curve CSV data")
    p.add_argument("--loss", required=True, help="loss key, e.g. ce or gence:q=0.7")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--grid-min", type=float, default=-10.0)
    p.add_argument("--grid-max", type=float, default=10.0)
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--samples", type=int, default=10_000, help="draws per grid point")
    p.add_argument("--hist-eps", type=float, default=0.0, help="shift of the initial z_k histogram")
    p.add_argument("--hist-bins", type=int, default=80)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("solve-bias", parents=[common()], help="solve for the output bias")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--target", type=float, required=True, help="target mean correct-class activation")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--tolerance", type=float, default=2e-3)
    p.add_argument("--bracket-lo", type=float, default=-10.0)
    p.add_argument("--bracket-hi", type=float, default=20.0)
    p.set_defaults(func=cmd_solve_bias)

    p = sub.add_parser("inject-noise", parents=[common()], help="resample labels symmetrically")
    p.add_argument("--data", required=True, help="dataset directory or CSV file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--eta", type=float, required=True, help="fraction of labels to resample")
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser(
        "train",
        parents=[common(seed_default=None, out_default=None)],
        help="run a training sweep from a JSON config",
    )
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common()], help="score a saved checkpoint")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset directory or CSV file")
    p.add_argument("--label-column", default="label")
    p.add_argument(
        "--against-clean",
        action="store_true",
        help="score only the noise-masked rows against their clean labels",
    )
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
