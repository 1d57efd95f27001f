"""Command-line front end.

Commands: sweep (key rate vs distance, CSV), simulate (tally CSV),
estimate (key-rate report from an external tally CSV), optimize (parameter
search), write-config (dump the default configuration).  All randomness
enters through --seed; exit codes are 0 (success), 1 (usage error),
2 (data/schema error).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

from .core import Config, ConfigError, load_config, save_config
from .eventsim import SimMode, TallySchemaError, read_tally_csv, \
    simulate_tallies, write_tally_csv
from .keyrate import REPORT_CSV_COLUMNS, end_to_end, report_to_json
from .optimizer import SearchSpec, optimize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser, distance=False, mode=False, out_required=True):
    parser.add_argument("--config", required=True, help="config JSON path")
    if distance:
        parser.add_argument("--distance", type=float, required=True,
                            metavar="KM")
    if mode:
        parser.add_argument("--mode", choices=("expected", "sampled"),
                            default="expected")
        parser.add_argument("--seed", type=int, default=0,
                            help="PRNG seed for sampled mode")
    parser.add_argument("--out", required=out_required, help="output path")


def build_parser() -> _Parser:
    parser = _Parser(prog="mdiqkd",
                     description="Three-state MDI-QKD simulation and "
                                 "security analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[], help="key rate vs distance CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--dmin", type=float, required=True, metavar="KM")
    p.add_argument("--dmax", type=float, required=True, metavar="KM")
    p.add_argument("--step", type=float, required=True, metavar="KM")
    p.add_argument("--mode", choices=("expected", "sampled"),
                   default="expected")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=None,
                   help="override the total statistical failure budget")
    p.add_argument("--asymptotic", action="store_true",
                   help="skip finite-size intervals")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="write a tally CSV")
    _add_common(p, distance=True, mode=True)

    p = sub.add_parser("estimate", help="run estimation on a tally CSV")
    p.add_argument("--tallies", required=True, help="tally CSV path")
    p.add_argument("--config", required=True)
    p.add_argument("--distance", type=float, default=0.0, metavar="KM",
                   help="distance recorded in the report")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--asymptotic", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("optimize", help="search protocol parameters")
    p.add_argument("--config", required=True)
    p.add_argument("--distance", type=float, required=True, metavar="KM")
    p.add_argument("--asymptotic", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("write-config", help="write the default config JSON")
    p.add_argument("--out", required=True)
    return parser


def _load(path: str, epsilon=None) -> Config:
    cfg = load_config(path)
    if epsilon is not None:
        from dataclasses import replace
        cfg = replace(cfg, analysis=replace(cfg.analysis,
                                            epsilon_total=epsilon))
    return cfg


def _mode_from_args(args) -> SimMode:
    if args.mode == "sampled":
        return SimMode.sampled(args.seed)
    return SimMode.expected()


def _cmd_sweep(args) -> int:
    cfg = _load(args.config, getattr(args, "epsilon", None))
    if args.dmin > args.dmax or args.step <= 0:
        print("mdiqkd: error: require dmin <= dmax and step > 0",
              file=sys.stderr)
        return EXIT_USAGE
    distances = []
    d = args.dmin
    while d <= args.dmax + 1e-9:
        distances.append(round(d, 9))
        d += args.step
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_COLUMNS)
        for dist in distances:
            report = end_to_end(cfg, dist, _mode_from_args(args),
                                asymptotic=args.asymptotic)
            writer.writerow(report.to_csv_row())
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load(args.config)
    table = simulate_tallies(cfg, args.distance, _mode_from_args(args))
    write_tally_csv(table, args.out)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = _load(args.config, args.epsilon)
    table = read_tally_csv(args.tallies)
    report = end_to_end(cfg, args.distance, SimMode.expected(),
                        asymptotic=args.asymptotic, tallies=table)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))
        fh.write("\n")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    cfg = _load(args.config)
    protocol, report = optimize(cfg, args.distance,
                                SearchSpec.from_dict(cfg.search_spec),
                                asymptotic=args.asymptotic)
    payload = report.to_json_dict()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def _cmd_write_config(args) -> int:
    save_config(Config.default(), args.out)
    return EXIT_OK


_COMMANDS = {
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "optimize": _cmd_optimize,
    "write-config": _cmd_write_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, TallySchemaError, ValueError) as exc:
        print(f"mdiqkd: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"mdiqkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
