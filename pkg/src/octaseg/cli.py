"""Command-line entry points: train, eval, predict, gradcheck, params."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import OPTIONS, parse_bool, resolve_settings
from .data import SUBSETS, TASKS, PartitionSpec, load_dataset, load_sample
from .gradcheck import run_suite
from .network import (ArchitectureConfig, LIGHTWEIGHT_CONFIG, build_model,
                      count_parameters)
from .pipeline import TrainConfig, evaluate, predict, train
from .checkpoint import load_checkpoint


def _add_shared_flags(parser):
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--data", type=str, help="dataset root directory")
    parser.add_argument("--task", choices=TASKS)
    parser.add_argument("--subset", choices=SUBSETS)
    parser.add_argument("--arch", choices=("dual", "alt"))
    parser.add_argument("--channels", type=int, help="initial channel count")
    parser.add_argument("--depth", type=int, help="number of encoder stages")
    parser.add_argument("--kernel", type=int, help="snake kernel sample points (odd)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=str, help="output directory")
    parser.add_argument("--window", type=int, help="attention window size")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--eval-every", dest="eval_every", type=int)
    parser.add_argument("--lr-start", dest="lr_start", type=float)
    parser.add_argument("--lr-peak", dest="lr_peak", type=float)
    parser.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--skeleton-iters", dest="skeleton_iters", type=int)
    parser.add_argument("--augment", type=parse_bool, metavar="BOOL")


def _settings(args):
    cli_values = {key: getattr(args, key, None) for key in OPTIONS}
    return resolve_settings(cli_values, config_path=args.config)


def _arch_config(s) -> ArchitectureConfig:
    return ArchitectureConfig(
        variant=s["arch"], init_channels=s["channels"], depth=s["depth"],
        dsconv_kernel_points=s["kernel"], window=s["window"])


def _train_config(s) -> TrainConfig:
    return TrainConfig(
        epochs=s["epochs"], eval_every=s["eval_every"], lr_start=s["lr_start"],
        lr_peak=s["lr_peak"], warmup_epochs=s["warmup_epochs"],
        batch_size=s["batch_size"], weight_decay=s["weight_decay"],
        seed=s["seed"], skeleton_iters=s["skeleton_iters"], augment=s["augment"])


def _require_data(s):
    if not s["data"]:
        raise SystemExit("error: --data (or a config-file data= entry) is required")
    return Path(s["data"])


def cmd_train(args):
    s = _settings(args)
    root = _require_data(s)
    partition = PartitionSpec(subset=s["subset"])
    splits = load_dataset(root, partition, s["task"])
    model = build_model(_arch_config(s), seed=s["seed"])
    out_dir = Path(s["out"])
    print(f"training {s['arch']} model ({count_parameters(model)} parameters) "
          f"on {len(splits.train)} train / {len(splits.val)} val samples")
    result = train(model, _train_config(s), splits.train, splits.val, out_dir)
    print(f"best validation loss {result.best_val_loss:.4f} at epoch "
          f"{result.best_epoch}; checkpoint: {result.best_checkpoint}")
    print(f"training log: {out_dir / 'train_log.csv'}")
    return 0


def cmd_eval(args):
    s = _settings(args)
    root = _require_data(s)
    partition = PartitionSpec(subset=s["subset"])
    splits = load_dataset(root, partition, s["task"])
    samples = splits[args.split]
    model = build_model(_arch_config(s), seed=s["seed"])
    load_checkpoint(model, args.checkpoint)
    out_csv = Path(s["out"]) / f"metrics_{args.split}.csv"
    report = evaluate(model, samples, skeleton_iters=s["skeleton_iters"],
                      split=args.split, task=s["task"], csv_path=out_csv)
    print(f"{args.split}: mean dice {report.mean_dice:.4f}, "
          f"mean jaccard {report.mean_jaccard:.4f}, "
          f"mean loss {report.mean_loss:.4f} over {len(samples)} samples")
    print(f"per-sample metrics: {out_csv}")
    return 0


def cmd_predict(args):
    s = _settings(args)
    root = _require_data(s)
    partition = PartitionSpec(subset=s["subset"])
    if args.ids in ("train", "val", "test"):
        ids = partition.ids(args.ids)
    else:
        ids = [int(part) for part in args.ids.split(",")]
    records = []
    for sample_id in ids:
        try:
            records.append(load_sample(root, s["subset"], s["task"], sample_id,
                                       require_label=False))
        except Exception as exc:
            print(f"skipping sample {sample_id}: {exc}", file=sys.stderr)
    model = build_model(_arch_config(s), seed=s["seed"])
    load_checkpoint(model, args.checkpoint)
    written, errors = predict(model, records, Path(s["out"]))
    for sample_id, message in errors:
        print(f"sample {sample_id} failed: {message}", file=sys.stderr)
    print(f"wrote {len(written)} mask/overlay pairs to {s['out']}")
    return 0 if not errors else 1


def cmd_gradcheck(args):
    from .checks import gradient_checks
    checks = gradient_checks()
    if args.only:
        wanted = args.only.split(",")
        checks = [(n, f) for n, f in checks if any(w in n for w in wanted)]
        if not checks:
            raise SystemExit(f"no gradient checks match {args.only!r}")
    ok, _ = run_suite(checks, tol=args.tol)
    print("all gradient checks passed" if ok else "GRADIENT CHECK FAILURES")
    return 0 if ok else 1


def cmd_params(args):
    s = _settings(args)
    cfg = _arch_config(s)
    model = build_model(cfg, seed=s["seed"])
    total = count_parameters(model)
    print(f"variant={cfg.variant} init_channels={cfg.init_channels} "
          f"depth={cfg.depth} kernel_points={cfg.dsconv_kernel_points}")
    per_stage = {}
    for name, p in model.named_parameters():
        top = ".".join(name.split(".")[:2])
        per_stage[top] = per_stage.get(top, 0) + p.data.size
    for top, count in per_stage.items():
        print(f"  {top:<24} {count:>12,}")
    print(f"  {'total':<24} {total:>12,}")
    lw = LIGHTWEIGHT_CONFIG
    if (cfg.variant, cfg.init_channels, cfg.depth, cfg.dsconv_kernel_points) == (
            lw.variant, lw.init_channels, lw.depth, lw.dsconv_kernel_points):
        print("  (this is the documented lightweight configuration)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="octaseg",
        description="Snake-convolution + windowed-attention OCTA segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on the canonical dataset layout")
    _add_shared_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _add_shared_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="write mask and overlay PNGs")
    _add_shared_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--ids", default="test",
                   help="comma-separated sample ids, or a split name")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of all operators")
    _add_shared_flags(p)
    p.add_argument("--only", help="comma-separated substrings to filter checks")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("params", help="report parameter counts for a configuration")
    _add_shared_flags(p)
    p.set_defaults(fn=cmd_params)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
