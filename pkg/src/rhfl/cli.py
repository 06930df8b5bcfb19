"""Command line entry point: ``rhfl run <config> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import containers
from .config import ExperimentSpec, dumps, load_config
from .data import empirical_flip_rate
from .errors import RHFLError
from .experiment import ablation_sweep, emit_plot_data, run_experiment
from .federation import build_world


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma-separated list of integers, got {text!r}")
    if not seeds or min(seeds) < 0:
        raise argparse.ArgumentTypeError("need at least one non-negative seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhfl", description="Noise-robust heterogeneous FL simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log round progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=None, help="output directory (default: experiment.output_dir)")
    run.add_argument("--seeds", type=_seed_list, default=None, help="override seeds, e.g. 0,1,2")
    run.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    run.add_argument("--ablation", action="store_true", help="run the six component presets per grid cell")
    run.add_argument("--plots", action="store_true", help="also write per-client learning curves")

    exp = sub.add_parser("export-data", help="write the client, test and public datasets of one seed")
    exp.add_argument("config", type=Path)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--out", type=Path, required=True)

    ins = sub.add_parser("inspect-data", help="summarize a dataset container")
    ins.add_argument("path", type=Path)
    ins.add_argument("--clean", type=Path, default=None, help="clean counterpart; prints the flip rate")
    return parser


def _cmd_run(args) -> int:
    spec: ExperimentSpec = load_config(args.config)
    if args.print_config:
        sys.stdout.write(dumps(spec))
        return 0
    out = args.out if args.out is not None else Path(spec.output_dir)
    if args.ablation:
        status, entries = ablation_sweep(spec, out, args.seeds)
    else:
        status, entries = run_experiment(spec, out, args.seeds)
    if args.plots:
        emit_plot_data(out / "metrics.csv")
    for e in entries:
        if e["status"] == "ok":
            print(f"{e['run']:<12} {e['ablation']:<18} avg acc {e['average_accuracy']:.4f}")
        else:
            print(f"{e['run']:<12} FAILED {e['error']}")
    return status


def _cmd_export(args) -> int:
    spec = load_config(args.config)
    world = build_world(spec.federation, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for k, ds in enumerate(world.client_data):
        containers.save_dataset(ds, args.out / f"client{k}_noisy.rhds")
        containers.save_dataset(ds.with_labels(world.clean_labels[k]), args.out / f"client{k}_clean.rhds")
        print(f"client{k}: {len(ds)} samples, realized noise {world.realized_noise[k]:.4f}")
    containers.save_dataset(world.test, args.out / "test.rhds")
    containers.save_dataset(world.public, args.out / "public.rhds")
    return 0


def _cmd_inspect(args) -> int:
    ds = containers.load_dataset(args.path)
    print(f"{args.path}: {len(ds)} rows, dim {ds.dim}, {ds.classes} classes")
    if args.clean is not None:
        clean = containers.load_dataset(args.clean)
        print(f"flip rate vs {args.clean}: {empirical_flip_rate(clean.labels, ds.labels):.6f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "export-data": _cmd_export, "inspect-data": _cmd_inspect}
    try:
        return handlers[args.command](args)
    except RHFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
