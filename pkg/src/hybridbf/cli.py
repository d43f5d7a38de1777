"""Command-line entry point.

Subcommands: ``gen-channels``, ``train``, ``eval``, ``fig <id>``, ``all``.
All state flows through the config file and flags; exit code 0 on
success, 2 with a structured error line on failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import EXPERIMENT_IDS, load_config
from .exceptions import SimulationError
from .experiments import get_or_train_model, run_experiment, run_gen_channels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridbf",
        description="Hybrid precoding simulator and benchmark suite")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML config file (defaults when omitted)")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--trials", type=int, default=None, help="override the trial count")

    sub = parser.add_subparsers(dest="command", required=True)
    gen = sub.add_parser("gen-channels", parents=[common],
                         help="export a channel batch to the binary tensor format")
    gen.add_argument("--count", type=int, default=None, help="number of realizations")
    sub.add_parser("train", parents=[common], help="train (or refresh) the default model")
    sub.add_parser("eval", parents=[common],
                   help="evaluate spectral efficiency with the cached model (fig6 pipeline)")
    fig = sub.add_parser("fig", parents=[common], help="run one figure reproduction")
    fig.add_argument("id", choices=[e for e in EXPERIMENT_IDS if e != "all"])
    sub.add_parser("all", parents=[common], help="run the full experiment suite")
    return parser


def _load(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.trials is not None:
        overrides["trials"] = args.trials
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "gen-channels":
            bundle = run_gen_channels(cfg, count=args.count)
        elif args.command == "train":
            get_or_train_model(cfg, force=True)
            print(f"trained model cached under {cfg.out_dir}/models")
            return 0
        elif args.command == "eval":
            bundle = run_experiment(cfg, "fig6")
        elif args.command == "fig":
            bundle = run_experiment(cfg, args.id)
        else:
            bundle = run_experiment(cfg, "all")
    except SimulationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for name, path in bundle.csv_paths.items():
        print(f"{bundle.experiment}: {name} -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
