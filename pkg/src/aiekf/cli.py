"""Command-line driver.

Subcommands:
  gen    generate a scenario into a sensor/truth log pair
  run    replay a log (or regenerate it) through one filter variant
  sweep  foot-noise grid sweep of one variant on one scenario
  table  full gait x terrain x variant RMSE matrix

Exit codes: 0 success, 1 config error, 2 numerical fault (filter
divergence: NaN state or covariance trace above 1e9).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .configio import ConfigError, load_noise, load_scenario
from .contact import GaitSchedule
from .core import FilterFaultError
from .harness import (
    Variant,
    emit_traces,
    gait_terrain_table,
    noise_sweep,
    replay,
    rmse_metrics,
    run_eval,
)
from .model import NoiseConfig
from .simulator import ScenarioConfig, generate, read_log, write_log

__all__ = ["main"]

DEFAULT_SWEEP_GRID = (0.002, 0.02, 0.2)


def _add_common(p: argparse.ArgumentParser, scenario_required=True):
    p.add_argument("--scenario", type=Path, required=scenario_required,
                   help="scenario config file (key = value lines)")
    p.add_argument("--config", type=Path, default=None,
                   help="filter noise config file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.add_argument("--out", type=Path, default=Path("out"),
                   help="output directory")


def _load(args):
    scenario = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    if args.seed is not None:
        scenario.seed = args.seed
    noise = load_noise(args.config) if args.config else NoiseConfig()
    return scenario, noise


def _stem(args, scenario) -> Path:
    name = args.scenario.stem if args.scenario else scenario.gait
    return args.out / name


def _streams(args, scenario):
    """Load previously generated logs if present, else generate in memory."""
    stem = _stem(args, scenario)
    sensor_file = stem.parent / (stem.name + "_sensor.csv")
    if sensor_file.exists():
        return read_log(stem)
    return generate(scenario)


def _cmd_gen(args) -> int:
    scenario, _ = _load(args)
    truth, sensors = generate(scenario)
    spath, tpath = write_log(truth, sensors, _stem(args, scenario))
    print(f"wrote {spath}")
    print(f"wrote {tpath}")
    return 0


def _cmd_run(args) -> int:
    scenario, noise = _load(args)
    variant = Variant.parse(args.variant)
    truth, sensors = _streams(args, scenario)
    gait = GaitSchedule.preset(scenario.gait)
    trace = replay(sensors, noise, variant, gait=gait,
                   contact_source=args.contacts, truth=truth)
    metrics = rmse_metrics(trace, truth)
    args.out.mkdir(parents=True, exist_ok=True)
    report = args.out / f"report_{variant.value.replace('+', '_')}.csv"
    with open(report, "w") as fh:
        fh.write("# aiekf-report v1\n")
        fh.write(f"# scenario={scenario.gait}/{scenario.terrain} seed={scenario.seed}\n")
        fh.write("variant,bv_x,bv_y,bv_z,roll_deg,pitch_deg\n")
        fh.write(variant.value + "," + ",".join(
            f"{metrics[c]:.10g}" for c in ("bv_x", "bv_y", "bv_z", "roll", "pitch")) + "\n")
    print(f"wrote {report}")
    for key in ("bv_x", "bv_y", "bv_z", "roll", "pitch"):
        print(f"  {key:6s} {metrics[key]:.5f}")
    if args.traces:
        paths = emit_traces(trace, args.out,
                            stem=f"trace_{variant.value.replace('+', '_')}",
                            alpha_max=noise.alpha_max)
        print(f"wrote {len(paths)} trace files to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    scenario, noise = _load(args)
    variant = Variant.parse(args.variant)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(DEFAULT_SWEEP_GRID)
    rows = noise_sweep(scenario, grid, variant, noise,
                       contact_source=args.contacts,
                       streams=_streams(args, scenario))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "sweep.csv"
    with open(path, "w") as fh:
        fh.write("# aiekf-sweep v1\n")
        fh.write("w_f,bv_x,bv_y,bv_z,roll_deg,pitch_deg\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.10g}" for c in
                              ("w_f", "bv_x", "bv_y", "bv_z", "roll", "pitch")) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_table(args) -> int:
    scenario, noise = _load(args)
    rows = gait_terrain_table(noise if args.config else None,
                              duration=scenario.duration,
                              seed=scenario.seed, contact_source=args.contacts)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "table.csv"
    with open(path, "w") as fh:
        fh.write("# aiekf-table v1\n")
        fh.write("terrain,gait,variant,bv_x,bv_y,bv_z,roll_deg,pitch_deg\n")
        for row in rows:
            fh.write(f"{row['terrain']},{row['gait']},{row['variant']}," + ",".join(
                f"{row[c]:.10g}" for c in ("bv_x", "bv_y", "bv_z", "roll", "pitch")) + "\n")
    print(f"wrote {path}")
    for row in rows:
        print(f"  {row['terrain']:5s} {row['gait']:11s} {row['variant']:10s} "
              f"vz={row['bv_z']:.4f} roll={row['roll']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aiekf",
        description="legged-robot state-estimation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate scenario logs")
    _add_common(g)
    g.set_defaults(fn=_cmd_gen)

    r = sub.add_parser("run", help="replay one variant and report RMSE")
    _add_common(r)
    r.add_argument("--variant", default="IEKF+SR+FE",
                   help="IEKF | IEKF+SR | IEKF+FE | IEKF+SR+FE")
    r.add_argument("--traces", action="store_true",
                   help="write per-leg diagnostic traces")
    r.add_argument("--contacts", choices=("detected", "truth"),
                   default="detected")
    r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("sweep", help="foot-noise sweep")
    _add_common(s)
    s.add_argument("--variant", default="IEKF")
    s.add_argument("--grid", default=None,
                   help="comma-separated foot-noise stds (default 0.002,0.02,0.2)")
    s.add_argument("--contacts", choices=("detected", "truth"),
                   default="detected")
    s.set_defaults(fn=_cmd_sweep)

    t = sub.add_parser("table", help="gait x terrain x variant matrix")
    _add_common(t, scenario_required=False)
    t.add_argument("--contacts", choices=("detected", "truth"),
                   default="detected")
    t.set_defaults(fn=_cmd_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FilterFaultError as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
