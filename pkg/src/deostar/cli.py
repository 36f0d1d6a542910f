"""Command-line entry point: ``deostar {run,sweep,index-sim,window-opt}``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a numerical error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import driver
from .config import PRESETS, RunConfig, default_output_root, parse_config
from .exceptions import ConfigError, InvalidArgumentError, NumericalError
from .index_sim import argmin_window, optimal_window, solve_g_root, sweep_table, window_from_root

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
    group = p.add_argument_group("run configuration (override the file)")
    for f in fields(RunConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="VALUE")


def _overrides(args):
    return {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name) is not None}


def _output_dir(config):
    if config.output_dir is not None:
        return Path(config.output_dir)
    return default_output_root() / config.name


def _ints(text):
    return [int(v) for v in text.replace(",", " ").split()]


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deostar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one sampler configuration")
    _add_config_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="repeat a run over values of one config field")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="config field to vary, e.g. window")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")

    p_idx = sub.add_parser("index-sim", help="closed-form vs Monte-Carlo round-trip times")
    p_idx.add_argument("--P", dest="Ps", type=_ints, default=[2, 4, 8, 16])
    p_idx.add_argument("--W", dest="Ws", type=_ints, default=[1, 2, 4, 8])
    p_idx.add_argument("--r", dest="rs", type=_floats, default=[0.3, 0.5, 0.7])
    p_idx.add_argument("--n-round-trips", type=int, default=100_000)
    p_idx.add_argument("--seed", type=int, default=0)
    p_idx.add_argument("--out", type=Path, help="CSV path (default: stdout)")

    p_win = sub.add_parser("window-opt", help="optimal window for P chains at target swap rate S")
    p_win.add_argument("--P", type=int, required=True)
    p_win.add_argument("--S", type=float, required=True)
    return parser


def _cmd_run(args):
    config = parse_config(args.config, _overrides(args), args.preset)
    out = _output_dir(config)
    report = driver.run(config, out)
    print(report.to_json(indent=2))
    print(f"artifacts written to {out}", file=sys.stderr)


def _cmd_sweep(args):
    config = parse_config(args.config, _overrides(args), args.preset)
    out = _output_dir(config)
    results = driver.sweep(config, args.axis, args.values.split(","), out)
    w = csv.writer(sys.stdout)
    w.writerow([args.axis, "round_trips_per_1000_iters", "tv_distance", "mode_coverage", "right_mode_weight"])
    for value, rep in results:
        w.writerow([value, rep.round_trips_per_1000_iters, rep.tv_distance, rep.mode_coverage, rep.right_mode_weight])


def _cmd_index_sim(args):
    if args.n_round_trips < 1:
        raise ConfigError("--n-round-trips must be >= 1")
    rows = sweep_table(args.Ps, args.Ws, args.rs, args.n_round_trips, args.seed)
    fh = args.out.open("w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()


def _cmd_window_opt(args):
    W = optimal_window(args.P, args.S)
    r = 1.0 - args.S
    print(f"optimal_window={W}")
    print(f"argmin_closed_form={argmin_window(args.P, r)}")
    if args.P >= 4:
        x = solve_g_root(args.P)
        print(f"g_root={x:.12g}")
        print(f"window_from_root={window_from_root(x, r):.6g}")


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "index-sim": _cmd_index_sim, "window-opt": _cmd_window_opt}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _COMMANDS[args.command](args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
