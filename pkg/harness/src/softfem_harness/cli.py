"""Harness command line: leg optimization, generic random search, plots."""
from __future__ import annotations

import argparse
import json
import sys

from .legopt import leg_optimize
from .plots import plot_trajectory
from .search import Param, SearchSpace, random_search, write_results_csv


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="softfem-harness",
        description="Optimization layer that drives the softfem CLI")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("leg-opt", help="maximize the jumping-leg objective")
    p.add_argument("--scene", required=True, help="leg scene JSON")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--engine", default="softfem")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=_cmd_leg_opt)

    p = sub.add_parser("random-search",
                       help="seeded random search from a JSON config")
    p.add_argument("--config", required=True,
                   help='JSON: {"params": [{name, low, high, scale?}], '
                        '"budget", "seed", "mode", "command": [...]}')
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=_cmd_random_search)

    p = sub.add_parser("plot", help="render a trajectory panel")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--panel", choices=["markers", "energy", "min-height"],
                   default="markers")
    p.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


def _cmd_leg_opt(args) -> int:
    best, records, summary = leg_optimize(
        args.scene, args.budget, args.seed, args.out_dir,
        engine=args.engine, workers=args.workers)
    if best is None:
        print("error: every trial failed", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_random_search(args) -> int:
    import os

    with open(args.config) as fh:
        cfg = json.load(fh)
    space = SearchSpace(
        tuple(Param(p["name"], float(p["low"]), float(p["high"]),
                    p.get("scale", "linear")) for p in cfg["params"]),
        budget=int(cfg["budget"]), seed=int(cfg.get("seed", 0)))
    best, records = random_search(space, cfg["command"],
                                  mode=cfg.get("mode", "max"),
                                  workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    write_results_csv(os.path.join(args.out_dir, "trials.csv"), space, records)
    if best is None:
        print("error: every trial failed", file=sys.stderr)
        return 1
    print(json.dumps({"best_params": best.params,
                      "best_objective": best.objective,
                      "trials": len(records)}, indent=2))
    return 0


def _cmd_plot(args) -> int:
    try:
        plot_trajectory(args.trajectory, args.out, args.panel)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
