"""Command-line entry points: run, bench and sweep.

Exit codes: 0 success, 1 configuration error, 2 non-convergence in at least
one repeat, 3 I/O error. The PDR_SEED environment variable overrides the
config's master seed; an explicit --seed flag overrides both.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .config import ConfigError, load_config
from .harness import (
    SWEEP_AXES,
    load_benchmark_grid,
    run_benchmark,
    run_experiment,
    run_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGENCE = 2
EXIT_IO = 3


def _resolve_seed(config, cli_seed):
    seed = config.master_seed
    env = os.environ.get("PDR_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError as err:
            raise ConfigError(f"PDR_SEED must be an integer, got {env!r}") from err
    if cli_seed is not None:
        seed = cli_seed
    if seed != config.master_seed:
        config = dataclasses.replace(config, master_seed=seed)
    return config


def _cmd_run(args) -> int:
    config = _resolve_seed(load_config(args.config), args.seed)
    result = run_experiment(config, out_dir=args.out)
    agg = result.summary["aggregate"]
    print(f"wrote {result.records_path} and {result.summary_path}")
    print(f"final_dist_sq_mean={agg['final_dist_sq_mean']} "
          f"aborted_repeats={agg['aborted_repeats']}")
    return EXIT_NONCONVERGENCE if result.any_aborted else EXIT_OK


def _cmd_bench(args) -> int:
    cells = load_benchmark_grid(args.grid)
    report = run_benchmark(cells, repeats=args.repeats, seed=args.seed or 0,
                           out_dir=args.out or "out")
    for cell in report["cells"]:
        ratio = cell["speedup"]
        shown = f"{ratio:.2f}x" if ratio is not None else "unstable"
        print(f"p={cell['p']} M={cell['M']} k={cell['k']} s={cell['s']} "
              f"{cell['aggregator']}: full={cell['full_mean_s']:.4f}s "
              f"projected={cell['projected_mean_s']:.4f}s speedup={shown}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _resolve_seed(load_config(args.config), args.seed)
    values: list = []
    for token in args.values.split(","):
        token = token.strip()
        if not token:
            continue
        if args.axis in ("b",):
            values.append(float(token))
        elif args.axis in ("k", "s"):
            values.append(int(token))
        else:
            values.append(token)
    path = run_sweep(config, args.axis, values, out_dir=args.out or "out")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdr",
        description="Projection-accelerated Byzantine-robust aggregation "
                    "simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="speedup benchmark over a grid")
    p_bench.add_argument("--grid", required=True)
    p_bench.add_argument("--repeats", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=_cmd_bench)

    p_sweep = sub.add_parser("sweep", help="sweep one config axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
