"""Command line entry point: run a scenario and persist its outputs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, dump_default_scenario, load_scenario
from .harness import run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tval",
        description="Torque-vectoring active-learning drive-cycle simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario to telemetry + summary")
    run.add_argument("--scenario", default="default",
                     help="scenario YAML path, or 'default' for the bundled one")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument("--mode", default=None,
                     choices=["tval", "passive", "driver-only", "tv-always"],
                     help="override the control mode")
    run.add_argument("--particles", type=int, default=None,
                     help="override the particle count")
    run.add_argument("--duration", type=float, default=None,
                     help="override the scenario duration in seconds")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--summary-only", action="store_true",
                     help="skip the telemetry CSV, write only the summary")

    dump = sub.add_parser("dump-scenario",
                          help="write the bundled default scenario YAML")
    dump.add_argument("--out", default="scenario.yaml")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "dump-scenario":
        dump_default_scenario(args.out)
        print(f"wrote {args.out}")
        return 0

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.duration is not None:
        overrides["duration"] = args.duration
    if args.particles is not None:
        overrides["filter"] = None  # replaced below after loading
    try:
        cfg = load_scenario(args.scenario,
                            overrides={k: v for k, v in overrides.items()
                                       if k != "filter"})
        if args.particles is not None:
            from dataclasses import replace
            cfg = replace(cfg, particles=args.particles)
    except ConfigError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1

    result = run_scenario(cfg, out_dir=Path(args.out),
                          write_telemetry=not args.summary_only)
    s = result.summary
    print(f"{s['name']}: mode={s['mode']} seed={s['seed']} "
          f"ticks={s['ticks']} energy={s['energy_j'] / 1e6:.3f} MJ "
          f"mean_power={s['mean_power_w'] / 1e3:.2f} kW "
          f"speed_rmse={s['speed_rmse']:.3f} m/s")
    if result.summary_path:
        print(f"summary: {result.summary_path}")
    if result.telemetry_path:
        print(f"telemetry: {result.telemetry_path}")
    if result.diverged:
        print(f"DIVERGED: {result.error}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
