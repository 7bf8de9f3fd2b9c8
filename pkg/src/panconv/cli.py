"""Command-line surface: train / grid / eval / inspect / validate.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every training run
writes a self-contained run directory (manifest + curves + checkpoints)
whose name is derived from the configuration, never from the clock, so
reruns land in the same place and produce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from . import train as tr
from .data import load_dataset, validate_dataset
from .errors import PanError
from .nn import load_checkpoint, save_checkpoint
from .propagator import PropagatorConfig, build_propagator
from .train import TrainConfig, dataset_checksum


def _resolve_dataset(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    env = os.environ.get("PAN_DATA_DIR")
    if env:
        candidate = Path(env) / arg
        if candidate.exists():
            return candidate
    raise PanError(f"dataset file not found: {arg}")


def _parse_k(text: str, parser: argparse.ArgumentParser):
    try:
        k = tuple(float(v) for v in text.split(","))
    except ValueError:
        parser.error(f"could not parse --k value {text!r}")
    if any(v < 0.0 for v in k):
        parser.error("--k components must be nonnegative")
    return k


def _add_common_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--dataset", required=True, help="PANDS file (or name under $PAN_DATA_DIR)")
    p.add_argument("--preset", choices=sorted(tr.PRESETS), help="per-dataset hyperparameter defaults")
    p.add_argument("--method", type=int, required=True, choices=range(1, 8))
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden", type=int)


def _merged_config(args, fixed_k, parser) -> TrainConfig:
    settings = {"lr": 0.01, "dropout": 0.5, "weight_decay": 5e-3,
                "max_epochs": 200, "patience": 50, "hidden": 16}
    if args.preset:
        settings.update(tr.PRESETS[args.preset])
    overrides = {"lr": args.lr, "dropout": args.dropout,
                 "weight_decay": args.weight_decay, "max_epochs": args.epochs,
                 "patience": args.patience, "hidden": args.hidden}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(method=args.method, L=args.L, seed=args.seed,
                           fixed_k=fixed_k, **settings)
    except ValueError as exc:
        parser.error(str(exc))


def _run_dir(out: str, cfg: TrainConfig, n_trials: int, sha256: str) -> Path:
    key = json.dumps(
        {"config": cfg.to_dict(), "trials": n_trials, "dataset": sha256},
        sort_keys=True,
    )
    digest = hashlib.sha256(key.encode()).hexdigest()[:12]
    return Path(out) / f"run-m{cfg.method}-L{cfg.L}-s{cfg.seed}-{digest}"


def _prepare_run_dir(path: Path, force: bool) -> Path:
    if path.exists():
        if not force:
            raise PanError(f"run directory already exists: {path} (use --force)")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def _cmd_train(args, parser) -> int:
    if args.train_k and args.k is not None:
        parser.error("--k and --train-k are mutually exclusive")
    if not args.train_k and args.k is None:
        parser.error("one of --k or --train-k is required")
    fixed_k = _parse_k(args.k, parser) if args.k is not None else None
    cfg = _merged_config(args, fixed_k, parser)
    path = _resolve_dataset(args.dataset)
    ds = load_dataset(path)
    sha = dataset_checksum(path)
    run_dir = _prepare_run_dir(_run_dir(args.out, cfg, args.trials, sha), args.force)
    summary = tr.run_trials(ds, cfg, args.trials, jobs=args.jobs)
    manifest = tr.run_manifest(cfg, summary, path, sha)
    (run_dir / "manifest.json").write_bytes(tr.manifest_bytes(manifest))
    (run_dir / "curves.csv").write_bytes(tr.curves_csv_bytes(summary))
    for t in summary.trials:
        save_checkpoint(
            run_dir / f"trial-{t.seed}.ckpt",
            t.params,
            {"method": cfg.method, "L": cfg.L, "seed": t.seed,
             "fixed_k": manifest["config"]["fixed_k"], "hidden": cfg.hidden},
        )
    print(f"test_acc mean {summary.mean_test_acc:.4f} std {summary.std_test_acc:.4f}")
    print(f"run dir: {run_dir}")
    return 0


def _cmd_grid(args, parser) -> int:
    path = _resolve_dataset(args.dataset)
    try:
        grid = tr.default_k_grid(args.L, args.grid_step)
    except ValueError as exc:
        parser.error(str(exc))
    cfg = _merged_config(args, grid[0], parser)
    ds = load_dataset(path)
    sha = dataset_checksum(path)
    run_dir = _prepare_run_dir(
        _run_dir(args.out, cfg, args.trials, sha).with_name(
            _run_dir(args.out, cfg, args.trials, sha).name.replace("run-", "grid-")
        ),
        args.force,
    )
    best_k, rows = tr.grid_search_k(ds, cfg, grid, n_trials=args.trials,
                                    jobs=args.jobs)
    (run_dir / "grid.csv").write_bytes(tr.grid_csv_bytes(rows))
    best_row = next(r for r in rows if r.k == best_k)
    print("winner k=" + ",".join(repr(v) for v in best_k)
          + f" mean_val_acc {best_row.mean_val_acc:.4f}"
          + f" mean_test_acc {best_row.mean_test_acc:.4f}")
    print(f"run dir: {run_dir}")
    return 0


def _cmd_eval(args, parser) -> int:
    path = _resolve_dataset(args.dataset)
    ds = load_dataset(path)
    params, meta = load_checkpoint(args.checkpoint)
    k = meta.get("fixed_k")
    init_k = tuple(k) if k is not None else tuple(
        1.0 / (meta["L"] + 1) for _ in range(meta["L"] + 1)
    )
    prop = build_propagator(ds.graph, PropagatorConfig.fixed_k(meta["method"], init_k))
    acc = tr.evaluate(params, ds, args.split, prop)
    print(f"{args.split}_acc {acc:.4f}")
    return 0


def _cmd_inspect(args, parser) -> int:
    if args.L < 0:
        parser.error("--L must be >= 0")
    fixed_k = _parse_k(args.k, parser)
    if len(fixed_k) != args.L + 1:
        parser.error(f"--k needs {args.L + 1} components for --L {args.L}")
    path = _resolve_dataset(args.dataset)
    ds = load_dataset(path)
    prop = build_propagator(ds.graph, PropagatorConfig.fixed_k(args.method, fixed_k))
    print(json.dumps(prop.inspect(), sort_keys=True, indent=2))
    return 0


def _cmd_validate(args, parser) -> int:
    path = _resolve_dataset(args.dataset)
    ds = load_dataset(path)
    report = validate_dataset(ds)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panconv",
        description="Path-integral graph convolution: training and inspection tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and report mean/std test accuracy")
    _add_common_train_flags(p_train)
    p_train.add_argument("--k", help="comma-separated fixed walk weights, length L+1")
    p_train.add_argument("--train-k", action="store_true",
                         help="learn the walk weights by backprop")
    p_train.set_defaults(func=_cmd_train)

    p_grid = sub.add_parser("grid", help="grid-search the walk weights")
    _add_common_train_flags(p_grid)
    p_grid.add_argument("--grid-step", type=float, default=0.25)
    p_grid.set_defaults(func=_cmd_grid)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=("train", "val", "test"), default="test")
    p_eval.set_defaults(func=_cmd_eval)

    p_inspect = sub.add_parser("inspect", help="print propagator statistics as JSON")
    p_inspect.add_argument("--dataset", required=True)
    p_inspect.add_argument("--method", type=int, required=True, choices=range(1, 8))
    p_inspect.add_argument("--L", type=int, required=True)
    p_inspect.add_argument("--k", required=True)
    p_inspect.set_defaults(func=_cmd_inspect)

    p_val = sub.add_parser("validate", help="audit a PANDS dataset file")
    p_val.add_argument("--dataset", required=True)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except PanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
