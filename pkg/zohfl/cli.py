#!/usr/bin/env python3
"""
Command-line interface for the ZO-HFL simulator.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from tabulate import tabulate

from zohfl.config import (
    HETEROGENEITY_LEVELS, METHOD_NAMES, OUT_DIR_ENV, PRESETS, config_to_dict, expand_grid, load_config,
    preset_configs, resolve_out_dir, validate_config, with_seed,
)
from zohfl.data import emit_partition_histogram, save_partition
from zohfl.exceptions import InvalidConfigurationError, RunAbortedError, ZoHFLError
from zohfl.experiment import Experiment, build_federated_data
from zohfl.metrics_writer import read_summary
from zohfl.models import RunConfig
from zohfl.oracles import relu_grid, relu_grid_csv, run_oracle_battery

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_INTERRUPTED = 130


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="Path to a JSON run configuration")
    parent.add_argument("--preset", choices=sorted(PRESETS), help="Named preset (one or more runs)")
    parent.add_argument("--out", help="Output directory (default: $ZOHFL_OUT_DIR or ./runs)")
    parent.add_argument("--seed", type=int, help="Override both the data and the algorithm seed")
    parent.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    parent.add_argument("--quiet", "-q", action="store_true", help="Suppress all output except errors")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="zohfl",
        description="Zeroth-order implicit hierarchical federated learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="Execute one run configuration")
    run.add_argument("--run-id", help="Pick one run when the preset expands to several")

    sub.add_parser("partition", parents=[common], help="Write client shards and the class histogram")

    inspect = sub.add_parser("inspect", parents=[common], help="Print configuration and partition summaries")
    inspect.add_argument("--summary", help="Render an existing summary.csv instead")

    sub.add_parser("validate", parents=[common], help="Run the oracle battery; --out also writes the ReLU grid")

    sweep = sub.add_parser("sweep", parents=[common], help="Run a grid of configurations")
    sweep.add_argument("--methods", nargs="*", choices=METHOD_NAMES,
                       help="Methods to expand a --config base over (default: all)")
    sweep.add_argument("--taus", nargs="*", type=float, help="tau values for the grid (default: 20)")
    sweep.add_argument("--parallel", action="store_true", help="Run configurations concurrently")
    sweep.add_argument("--max-workers", type=int, default=4, help="Concurrent runs (default: 4)")
    return parser


def configure_logging(verbose: bool, quiet: bool):
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    if quiet:
        level = logging.ERROR
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def load_configs(args) -> List[RunConfig]:
    """Configs named by --config or --preset (defaults otherwise), with --seed applied"""
    if args.config and args.preset:
        raise InvalidConfigurationError("give either --config or --preset, not both")
    if args.preset:
        return preset_configs(args.preset, args.seed)
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = with_seed(config, args.seed)
    validate_config(config)
    return [config]


def _single(configs: List[RunConfig], run_id: Optional[str]) -> RunConfig:
    if run_id:
        for config in configs:
            if config.run_id == run_id:
                return config
        raise InvalidConfigurationError(f"no run named '{run_id}'", "run_id")
    if len(configs) != 1:
        names = ", ".join(c.run_id for c in configs)
        raise InvalidConfigurationError(f"preset expands to {len(configs)} runs; pick one with --run-id ({names})")
    return configs[0]


def _flatten(data: dict, prefix: str = "") -> List[List[str]]:
    rows = []
    for key in sorted(data):
        value = data[key]
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            rows.extend(_flatten(value, name))
        else:
            rows.append([name, json.dumps(value)])
    return rows


def _histogram_table(counts) -> str:
    headers = ["client"] + [f"c{c}" for c in range(counts.shape[1])] + ["total"]
    rows = [[i] + [int(v) for v in row] + [int(row.sum())] for i, row in enumerate(counts)]
    return tabulate(rows, headers=headers, tablefmt="simple")


def cmd_run(args, out_dir: str) -> int:
    config = _single(load_configs(args), getattr(args, "run_id", None))
    if not args.quiet:
        print(f"Running {config.run_id} ({config.method}, {config.rounds} rounds)")
    summaries = Experiment(out_dir).run_all([config])
    if not args.quiet:
        s = summaries[0]
        print("\nRun Summary:")
        print(f"  Final loss: {s.final_loss:.6f}")
        print(f"  Final test accuracy: {s.final_accuracy:.4f}")
        print(f"  Wall time: {s.wall_time:.2f}s")
        print(f"  Outputs: {os.path.join(out_dir, config.run_id)}")
    return EXIT_OK


def cmd_partition(args, out_dir: str) -> int:
    for config in load_configs(args):
        data = build_federated_data(config)
        target = os.path.join(out_dir, config.run_id, "partition")
        save_partition(data, target)
        if not args.quiet:
            print(f"Partition for {config.run_id} (alpha={config.alpha:g}, retries={data.plan.retries}):")
            print(_histogram_table(emit_partition_histogram(data)))
            print(f"  Written to {target}\n")
    return EXIT_OK


def cmd_inspect(args, out_dir: str) -> int:
    if args.summary:
        rows = read_summary(args.summary)
        print(tabulate(rows, headers="keys", tablefmt="github"))
        return EXIT_OK

    for config in load_configs(args):
        print(f"Configuration {config.run_id}:")
        print(tabulate(_flatten(config_to_dict(config)), headers=["field", "value"], tablefmt="simple"))
        data = build_federated_data(config)
        print(f"\nPartition: server={data.server.size} test={data.test.size} "
              f"clients={data.train_total - data.server.size}")
        print(_histogram_table(emit_partition_histogram(data)))
        print()
    return EXIT_OK


def cmd_validate(args, out_dir: Optional[str]) -> int:
    reports = run_oracle_battery(seed=args.seed if args.seed is not None else 0)
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in reports]
    for line in lines:
        print(line)

    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(os.path.join(out_dir, "oracle_reports.jsonl"), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        with open(os.path.join(out_dir, "relu_grid.csv"), "w", encoding="utf-8") as f:
            f.write(relu_grid_csv(relu_grid()))

    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} oracle check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"All {len(reports)} oracle checks passed", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args, out_dir: str) -> int:
    configs = load_configs(args)
    if not args.preset:
        taus = args.taus or [20.0]
        methods = args.methods or list(METHOD_NAMES)
        configs = expand_grid(configs[0], HETEROGENEITY_LEVELS, taus, methods)
        for config in configs:
            validate_config(config)

    if not args.quiet:
        print(f"Sweeping {len(configs)} configuration(s) into {out_dir}")
    summaries = Experiment(out_dir, parallel=args.parallel, max_workers=args.max_workers).run_all(configs)
    if not args.quiet:
        rows = [dataclasses.astuple(s) for s in sorted(summaries, key=lambda s: s.run_id)]
        headers = [f.name for f in dataclasses.fields(summaries[0])] if summaries else []
        print(tabulate(rows, headers=headers, floatfmt=".4f", tablefmt="simple"))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "partition": cmd_partition,
    "inspect": cmd_inspect,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the command-line interface"""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    if args.command == "validate":
        out_dir = args.out or os.environ.get(OUT_DIR_ENV)
    else:
        out_dir = resolve_out_dir(args.out)

    try:
        return COMMANDS[args.command](args, out_dir)
    except InvalidConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAbortedError as e:
        print(f"Run aborted at round {e.round}: {e.cause}", file=sys.stderr)
        return EXIT_RUNTIME
    except ZoHFLError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
