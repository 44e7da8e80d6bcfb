"""Command-line front end: ``generate``, ``solve`` and ``sweep``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .channel import draw_channels
from .orchestrator import METHODS, SolverParams, algorithm3_solve, report_to_dict
from .scenario import (
    LAYOUTS,
    OVERRIDE_KEYS,
    ScenarioError,
    generate_scenario,
    load_scenario,
    serialize_scenario,
    subarea_counts,
)
from .sweep import AXES, ScenarioSpec, monte_carlo_sweep


class CliError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text}")
    return v


def _override(text):
    key, sep, value = text.partition("=")
    if not sep or key not in OVERRIDE_KEYS:
        raise argparse.ArgumentTypeError(
            f"expected KEY=VALUE with KEY in {', '.join(OVERRIDE_KEYS)}, got {text!r}")
    for kind in (int, float):
        try:
            return key, kind(value)
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"override {key} needs a number, got {value!r}")


def _csv_list(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vhetnet",
        description="Joint user association and beamforming for satellite-HAPS-ground downlinks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a scenario and write it as JSON")
    g.add_argument("--layout", choices=sorted(LAYOUTS), required=True)
    g.add_argument("--users", type=_positive_int, required=True)
    g.add_argument("--seed", type=_nonneg_int, required=True)
    g.add_argument("--set", dest="overrides", type=_override, action="append", default=[],
                   metavar="KEY=VALUE", help="override a layout default (repeatable)")
    g.add_argument("-o", "--output", type=Path, help="scenario file (default: stdout)")

    s = sub.add_parser("solve", help="draw channels for a scenario and run one method")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--method", choices=METHODS, default="IG_WMMSE")
    s.add_argument("--seed", type=_nonneg_int, required=True, help="channel seed")
    s.add_argument("--fso-rate", type=_nonneg_float, metavar="BPS",
                   help="replace the scenario's backhaul rate")
    s.add_argument("--max-outer", type=_positive_int, default=SolverParams.max_outer)
    s.add_argument("--time", action="store_true", help="include wall time in the report")
    s.add_argument("-o", "--output", type=Path, help="report file (default: stdout)")

    w = sub.add_parser("sweep", help="Monte-Carlo sweep over one scenario parameter")
    w.add_argument("--layout", choices=sorted(LAYOUTS), default="medium")
    w.add_argument("--users", type=_positive_int, default=20)
    w.add_argument("--axis", choices=sorted(AXES), required=True)
    w.add_argument("--values", type=_csv_list, required=True, metavar="V1,V2,...")
    w.add_argument("--methods", type=_csv_list, default=list(METHODS), metavar="M1,M2,...")
    w.add_argument("--trials", type=_positive_int, default=10)
    w.add_argument("--seed", type=_nonneg_int, required=True)
    w.add_argument("--jobs", type=_positive_int, default=1)
    w.add_argument("--set", dest="overrides", type=_override, action="append", default=[],
                   metavar="KEY=VALUE")
    w.add_argument("--max-outer", type=_positive_int, default=SolverParams.max_outer)
    w.add_argument("--time", action="store_true", help="fill the wall_ms column")
    w.add_argument("-o", "--output", metavar="PREFIX",
                   help="write PREFIX.csv and PREFIX.json (default: CSV on stdout)")
    return parser


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e.strerror}") from None


def cmd_generate(args, out) -> None:
    s = generate_scenario(args.layout, args.seed, args.users, dict(args.overrides))
    text = serialize_scenario(s)
    counts = subarea_counts(args.layout, args.users)
    summary = f"{s.n_transmitters} transmitters; users " + ", ".join(
        f"{name} {n}" for name, n in counts.items())
    if args.output is None:
        out.write(text)
        print(summary, file=sys.stderr)
    else:
        _write(args.output, text)
        print(summary, file=out)


def cmd_solve(args, out) -> None:
    try:
        s = load_scenario(args.scenario)
    except OSError as e:
        raise CliError(f"cannot read {args.scenario}: {e.strerror}") from None
    if args.fso_rate is not None:
        s = s.replace(fso_rate_override=args.fso_rate)
    ch = draw_channels(s, args.seed)
    params = SolverParams(method=args.method, max_outer=args.max_outer, seed=args.seed)
    report = algorithm3_solve(s, ch, params)
    text = json.dumps(report_to_dict(report, include_time=args.time), indent=2) + "\n"
    summary = f"sum-rate {report.sum_rate_bps / 1e6:.3f} Mbit/s  delta {report.delta:.3f}"
    if args.output is None:
        out.write(text)
        print(summary, file=sys.stderr)
    else:
        _write(args.output, text)
        print(summary, file=out)


def cmd_sweep(args, out) -> None:
    unknown = [m for m in args.methods if m not in METHODS]
    if unknown:
        raise CliError(f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(METHODS)}")
    base = ScenarioSpec(args.layout, args.users, dict(args.overrides))
    result = monte_carlo_sweep(
        base, args.axis, args.values, args.trials,
        params=SolverParams(max_outer=args.max_outer),
        methods=args.methods, master_seed=args.seed, jobs=args.jobs, record_time=args.time,
    )
    if args.output is None:
        out.write(result.to_csv())
        return
    _write(f"{args.output}.csv", result.to_csv())
    _write(f"{args.output}.json", result.to_json() + "\n")
    print(f"{len(result.rows)} rows -> {args.output}.csv, {args.output}.json", file=out)


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args, sys.stdout)
    except (CliError, ScenarioError, ValueError) as e:
        print(f"vhetnet {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
