"""``ftsim`` command line.

Exit codes: 0 success, 1 configuration/argument error, 2 I/O error,
3 the simulated campaign produced an incorrect vote.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis, plotting
from .core import (DecodeStatus, Word, format_bits, hamming_decode, hamming_encode,
                   parse_scheme, vote)
from .engine import ConfigError, SimConfig, detection_latency, run_simulation
from .recovery import calibrate_recovery_model, read_points_csv

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("ftsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _setup_logging() -> None:
    level = os.environ.get("FTSIM_LOG", "events").lower()
    levels = {"off": logging.CRITICAL + 1, "events": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"FTSIM_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv_list(text: str, conv=str) -> list:
    try:
        return [conv(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    config = SimConfig.from_dict(raw)
    config.validate()
    result = run_simulation(config)
    m = result.metrics
    result.write_events(args.events)
    result.write_metrics(args.metrics)
    if args.figure:
        plotting.plot_timeline(result.events, config.scheme.n_modules,
                               plotting.figure_path(args.metrics))
    lat = detection_latency(result.events)
    log.info("injections=%d detections=%d recoveries=%d votes=%d incorrect=%d "
             "max_latency_ms=%.2f", m.injections, m.detections, m.recoveries, m.votes,
             m.incorrect_votes, max(lat, default=0.0))
    return EXIT_FAILED if m.incorrect_votes else EXIT_OK


def cmd_compare(args) -> int:
    schemes = [parse_scheme(s) for s in _csv_list(args.schemes)]
    if args.multiplicity:
        rows = analysis.compare_schemes(schemes, _csv_list(args.multiplicity, int))
    else:
        rows = analysis.tolerance_table(schemes)
    _write_text(args.out, analysis.emit_report(rows, "csv"))
    if args.out and args.figure:
        grid = rows if args.multiplicity else analysis.compare_schemes(schemes, [1, 2, 3, 4])
        plotting.plot_comparison(grid, plotting.figure_path(args.out))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    points = read_points_csv(args.points)
    model = calibrate_recovery_model(points)
    rows = analysis.calibration_report(points, model)
    worst = max(abs(r.residual_pct) for r in rows)
    print(json.dumps({**model.to_dict(), "max_abs_residual_pct": round(worst, 6)}))
    if args.report:
        _write_text(args.report, analysis.emit_report(rows, "csv"))
        if args.figure:
            plotting.plot_calibration(rows, model, plotting.figure_path(args.report))
    return EXIT_OK


def cmd_mc(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required")
    if args.reps < 1 or not 0 <= args.q <= 1:
        raise UsageError("need --reps >= 1 and 0 <= --q <= 1")
    est = analysis.monte_carlo_reliability(parse_scheme(args.scheme), args.q, args.reps,
                                           args.seed, workers=args.workers)
    _write_text(args.out, analysis.emit_report([est], "csv"))
    if args.out and args.figure:
        plotting.plot_reliability([est], plotting.figure_path(args.out))
    return EXIT_OK


def cmd_codec(args) -> int:
    word = Word.from_bits(args.bits)
    if args.action == "encode":
        if word.width != 4:
            raise UsageError("encode expects 4 bits")
        print(format_bits(hamming_encode(word.value), 8))
        return EXIT_OK
    if word.width != 8:
        raise UsageError("decode expects 8 bits")
    res = hamming_decode(word.value)
    extra = f" {res.position}" if res.status is DecodeStatus.CORRECTED_SINGLE else ""
    print(f"{format_bits(res.data, 4)} {res.status.value}{extra}")
    return EXIT_OK


def cmd_vote(args) -> int:
    words = [Word.from_hex(h) for h in args.words]
    k = args.k if args.k is not None else len(words) // 2 + 1
    result = vote(words, k)
    print(format(result.value, f"0{result.width // 4}x"))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ftsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def figure_flag(sp):
        sp.add_argument("--no-figure", dest="figure", action="store_false",
                        help="skip the PNG written next to the report")

    r = sub.add_parser("run", help="run a fault-injection campaign")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--events", required=True, help="JSON Lines event log")
    r.add_argument("--metrics", required=True, help="metrics JSON")
    figure_flag(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="exhaustive tolerance comparison of schemes")
    c.add_argument("--schemes", default="tmr,fmr,nmr9")
    c.add_argument("--multiplicity", help="comma-separated fault counts; default: measured limit")
    c.add_argument("--out")
    figure_flag(c)
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("calibrate", help="fit the recovery latency model")
    k.add_argument("--points", required=True, help="CSV with size_kb,ms")
    k.add_argument("--report")
    figure_flag(k)
    k.set_defaults(func=cmd_calibrate)

    m = sub.add_parser("mc", help="Monte Carlo failure probability")
    m.add_argument("--scheme", default="fmr")
    m.add_argument("--q", type=float, required=True)
    m.add_argument("--reps", type=int, default=100_000)
    m.add_argument("--seed", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--out")
    figure_flag(m)
    m.set_defaults(func=cmd_mc)

    d = sub.add_parser("codec", help="extended Hamming(8,4) encode/decode")
    d.add_argument("action", choices=["encode", "decode"])
    d.add_argument("bits")
    d.set_defaults(func=cmd_codec)

    v = sub.add_parser("vote", help="per-bit threshold vote over hex words")
    v.add_argument("--k", type=int)
    v.add_argument("words", nargs="+")
    v.set_defaults(func=cmd_vote)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"ftsim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ftsim: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"ftsim: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
