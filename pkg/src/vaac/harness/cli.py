"""Command line entry point: ``vaac run|sweep|evaluate|export-histogram``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..env_maze import export_histogram, read_counts_csv
from ..nn_core import ConfigurationError
from .config import load_config
from .runner import SweepSpec, evaluate, run, sweep


def _parse_sets(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--steps", type=int, help="total environment steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one agent")
    _common(p)
    p.add_argument("--agent", choices=["vaac", "sac", "rnd"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("sweep", help="train several agents x seeds and aggregate")
    _common(p)
    p.add_argument("--agents", default="vaac,sac,rnd", help="comma-separated agent kinds")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="deterministic-policy return of a checkpoint")
    p.add_argument("--run-dir", type=Path, required=True, help="directory written by `run`")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("export-histogram", help="re-render a visit-count CSV as a PGM image")
    p.add_argument("--counts", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            overrides = _parse_sets(args.set)
            for key, val in (("agent", args.agent), ("seed", args.seed), ("total_steps", args.steps)):
                if val is not None:
                    overrides[key] = val
            config = load_config(args.config, overrides)
            out = run(config, args.out)
            print(f"run directory: {out}")
        elif args.command == "sweep":
            overrides = _parse_sets(args.set)
            if args.steps is not None:
                overrides["total_steps"] = args.steps
            base = load_config(args.config, overrides)
            spec = SweepSpec(base, seeds=[int(s) for s in args.seeds.split(",")],
                             agents=[a.strip() for a in args.agents.split(",")])
            result = sweep(spec, args.out, workers=args.workers)
            print(f"aggregate: {result.aggregate_path}")
            print(f"summary: {result.summary_path}")
        elif args.command == "evaluate":
            config = load_config(args.run_dir / "config.txt", _parse_sets(args.set))
            result = evaluate(args.run_dir / "checkpoint.npz", config, args.episodes)
            print(f"mean return over {args.episodes} episodes: {result.mean_return!r}")
        elif args.command == "export-histogram":
            pgm, csv_path = export_histogram(read_counts_csv(args.counts), args.out)
            print(f"histogram: {pgm}\ncounts: {csv_path}")
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
