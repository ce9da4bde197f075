"""Command-line interface.

Subcommands: train, compare, preview-augment, bench-throughput, eval.
Run settings resolve in three layers: built-in defaults, then a flat
key=value config file (--config), then explicit command-line flags.
Failures print a single machine-readable JSON line to stderr and exit
nonzero.
"""

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import data as data_mod
from . import numcore, policy, trainer, transforms
from . import rng as rng_mod
from .errors import EntaugError
from .image import write_ppm
from .trainer import RunConfig


def _parse_value(name: str, kind, text: str):
    if kind is bool:
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise EntaugError(f"config key {name}: expected a boolean, got {text!r}")
    if kind is tuple:
        return tuple(int(v) for v in text.split(",") if v.strip())
    return kind(text)


def load_config_file(path) -> dict:
    """Flat key=value file; blank lines and #-comments ignored."""
    name_map = {"str": str, "int": int, "float": float, "bool": bool, "tuple": tuple}
    field_types = {
        f.name: f.type if isinstance(f.type, type) else name_map[f.type] for f in fields(RunConfig)
    }
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise EntaugError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in field_types:
            raise EntaugError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, field_types[key], raw.strip())
    return values


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--dataset", choices=data_mod.DATASET_NAMES)
    parser.add_argument("--data-dir", dest="data_dir", help="dataset root (default $ENTAUG_DATA_DIR or ./data)")
    parser.add_argument("--subset", type=int)
    parser.add_argument("--test-subset", dest="test_subset", type=int)
    parser.add_argument("--arch")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr0", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--nesterov", dest="nesterov", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--schedule", choices=("cosine", "multistep"))
    parser.add_argument("--milestones", help="comma-separated epochs for the multistep schedule")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--ent-loss", dest="use_ent_loss", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--ent-weight", dest="ent_weight", type=float)
    parser.add_argument("--sign-mode", dest="sign_mode", choices=numcore.SIGN_MODES)
    parser.add_argument("--aug-mode", dest="aug_mode", choices=trainer.AUG_MODES)
    parser.add_argument("--entropy-source", dest="entropy_source", choices=policy.ENTROPY_SOURCES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--data-seed", dest="data_seed", type=int)
    parser.add_argument("--out", dest="out_dir")
    parser.add_argument("--strict-serial", dest="strict_serial", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--net-dtype", dest="net_dtype", choices=("float32", "float64"))
    parser.add_argument("--hidden", type=int)
    parser.add_argument("--pad", type=int)
    parser.add_argument("--fill", type=int)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        cli_value = getattr(args, f.name, None)
        if cli_value is not None:
            values[f.name] = tuple(int(v) for v in cli_value.split(",")) if f.name == "milestones" else cli_value
    return RunConfig(**values)


def cmd_train(args) -> int:
    result = trainer.train(build_run_config(args))
    final = result.records[-1]
    print(f"run complete: {len(result.records)} epochs, final test accuracy {final.test_accuracy:.4f}")
    print(f"outputs in {Path(result.meta['config']['out_dir'])}")
    return 0


def cmd_compare(args) -> int:
    cfg = build_run_config(args)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    arms = None
    if args.arms:
        arms = []
        for token in args.arms.split(","):
            loss, _, mode = token.strip().partition("|")
            arms.append((loss, mode))
    report = trainer.compare(cfg, seeds, arms=arms, out_dir=cfg.out_dir, workers=args.workers)
    for name, arm in report["arms"].items():
        stats = arm["summary"]["final_accuracy"]
        print(f"{name}: median accuracy {stats['median']:.4f} (mean {stats['mean']:.4f} ± {stats['std']:.4f})")
    return 0


def cmd_preview(args) -> int:
    cfg = build_run_config(args)
    train_ds, test_ds = data_mod.get_dataset(cfg.dataset, cfg.data_dir or None)
    ds = train_ds if args.split == "train" else test_ds
    kinds = list(transforms.KINDS) if args.kind == "all" else [transforms.TransformKind(args.kind)]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = args.m
    count = min(args.count, len(ds))
    for index in range(count):
        for kind in kinds:
            rng = rng_mod.sample_stream(cfg.seed, 0, index)
            augmented = transforms.apply(transforms.spec_for(kind), ds.image(index), m, rng, cfg.fill)
            name = f"{args.split}_{index}_{kind.value}_{int(round(m * 1000))}.ppm"
            write_ppm(augmented, out / name)
    print(f"wrote {count * len(kinds)} previews to {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = build_run_config(args)
    report = trainer.bench_throughput(cfg, args.n_batches, out_dir=cfg.out_dir)
    for mode, stats in report["modes"].items():
        print(f"{mode}: mean {stats['mean_seconds'] * 1e3:.3f} ms/batch, p95 {stats['p95_seconds'] * 1e3:.3f} ms")
    return 0


def cmd_eval(args) -> int:
    report = trainer.evaluate_checkpoint(args.checkpoint, data_dir=args.data_dir)
    print(json.dumps(report, sort_keys=True))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entaug", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write metrics, figures, checkpoints")
    _add_run_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="run a loss x augmentation-mode matrix over seeds")
    _add_run_flags(p_cmp)
    p_cmp.add_argument("--seeds", required=True, help="comma-separated seed list (>= 3)")
    p_cmp.add_argument("--arms", help="comma-separated loss|mode pairs; default is the full matrix")
    p_cmp.add_argument("--workers", type=int, default=1, help="parallel run processes (results unchanged)")
    p_cmp.set_defaults(func=cmd_compare)

    p_prev = sub.add_parser("preview-augment", help="dump augmented samples as binary PPM files")
    _add_run_flags(p_prev)
    p_prev.add_argument("--split", choices=("train", "test"), default="train")
    p_prev.add_argument("--count", type=int, default=4)
    p_prev.add_argument("--m", type=float, default=0.5)
    p_prev.add_argument("--kind", default="all", help="transform name or 'all'")
    p_prev.set_defaults(func=cmd_preview)

    p_bench = sub.add_parser("bench-throughput", help="time the augmentation stage per magnitude policy")
    _add_run_flags(p_bench)
    p_bench.add_argument("--n-batches", dest="n_batches", type=int, default=100)
    p_bench.set_defaults(func=cmd_bench)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-dir", dest="data_dir")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EntaugError, OSError) as exc:
        line = {"error": {"kind": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(line, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
