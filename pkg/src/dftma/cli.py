"""Command line front end.

Subcommands:

  analyze   compute a measure on a (possibly instantiated) fault tree
  regions   synthesise sound parameter regions against a measure threshold
  export    write DOT / JSON artifacts of the fault tree and its automaton

Exit codes: 0 success, 2 input/validation/compatibility error, 3 state
budget exhausted, undefined measure or remaining nondeterminism.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction

from .galileo import DftError
from .measures import CompatibilityError, MeasureKind, MeasureSpec
from .run import (NondeterminismError, RunConfig, run_analyze, run_export,
                  run_regions, to_json)
from .analysis import NotModular, UndefinedMeasure
from .state_space import StateBudgetExceeded, import_ma_json


def _measure_arg(text: str, conditional: bool, event: str | None) -> MeasureSpec:
    name, _, arg = text.partition("=")
    name = name.lower()
    try:
        kind = MeasureKind(name)
    except ValueError:
        raise argparse.ArgumentTypeError("unknown measure %r" % text)
    t = None
    be = None
    if kind == MeasureKind.RELIABILITY:
        if not arg:
            raise argparse.ArgumentTypeError(
                "reliability needs a horizon, e.g. reliability=10")
        t = float(arg)
    elif kind in (MeasureKind.FUSSELL_VESELY, MeasureKind.CRITICALITY):
        if not arg:
            raise argparse.ArgumentTypeError(
                "%s needs a basic event, e.g. %s=NAME" % (name, name))
        be = arg
    elif arg:
        raise argparse.ArgumentTypeError("measure %s takes no argument" % name)
    return MeasureSpec(kind, t=t, be=be, conditional=conditional, event=event)


def _add_toggles(p: argparse.ArgumentParser) -> None:
    for opt in ("symred", "dc", "por", "modularisation"):
        group = p.add_mutually_exclusive_group()
        group.add_argument("--%s" % opt, dest=opt, action="store_true",
                           default=None, help="force %s on" % opt)
        group.add_argument("--no-%s" % opt, dest=opt, action="store_false",
                           help="force %s off" % opt)
    p.add_argument("--budget", type=int, default=None,
                   help="state budget for exploration")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for sampling validators")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="PARAM=VALUE", help="instantiate a parameter")


def _parse_sets(items: list) -> dict:
    out = {}
    for item in items:
        name, eq, value = item.partition("=")
        if not eq:
            raise DftError("--set expects PARAM=VALUE, got %r" % item)
        out[name] = Fraction(value)
    return out


def _parse_box(text: str) -> dict:
    out = {}
    for chunk in text.split(","):
        parts = chunk.split(":")
        if len(parts) != 3:
            raise DftError("--box expects name:lo:hi[,name:lo:hi...]")
        out[parts[0]] = (Fraction(parts[1]), Fraction(parts[2]))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dftma",
                                description="dynamic fault tree analysis "
                                            "via Markov automata")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="compute a measure")
    pa.add_argument("--dft", help="Galileo-dialect input file")
    pa.add_argument("--ma", help="previously exported automaton JSON")
    pa.add_argument("--measure", required=True)
    pa.add_argument("--conditional", action="store_true")
    pa.add_argument("--event", default=None,
                    help="Boolean formula over failed()/operational() atoms")
    pa.add_argument("--format", choices=("json", "text"), default="json")
    pa.add_argument("--out", default=None, help="write the result here")
    pa.add_argument("--export-dot", default=None,
                    help="also write the automaton as DOT")
    pa.add_argument("--export-json", default=None,
                    help="also write the automaton as JSON")
    _add_toggles(pa)

    pr = sub.add_parser("regions", help="parameter space partitioning")
    pr.add_argument("--dft", required=True)
    pr.add_argument("--measure", required=True)
    pr.add_argument("--conditional", action="store_true")
    pr.add_argument("--threshold", required=True)
    pr.add_argument("--direction", choices=("above", "below"),
                    default="above")
    pr.add_argument("--box", required=True, help="name:lo:hi[,name:lo:hi...]")
    pr.add_argument("--coverage", type=float, default=0.9)
    pr.add_argument("--depth", type=int, default=24)
    pr.add_argument("--validate-samples", type=int, default=100)
    pr.add_argument("--function", action="store_true",
                    help="print the rational function and exit")
    pr.add_argument("--out", default=None, help="write the region CSV here")
    _add_toggles(pr)

    pe = sub.add_parser("export", help="write DOT/JSON artifacts")
    pe.add_argument("--dft", required=True)
    pe.add_argument("--dot", default=None, help="fault tree DOT output")
    pe.add_argument("--ma-dot", default=None, help="automaton DOT output")
    pe.add_argument("--ma-json", default=None, help="automaton JSON output")
    _add_toggles(pe)
    return p


def _config_from(args) -> RunConfig:
    text = ""
    source = "<none>"
    if getattr(args, "dft", None):
        with open(args.dft, "r", encoding="utf-8") as fh:
            text = fh.read()
        source = args.dft
    cfg = RunConfig(dft_text=text, source=source)
    cfg.symred = args.symred
    cfg.dc = args.dc
    cfg.por = args.por
    cfg.modularisation = args.modularisation
    cfg.budget = args.budget
    cfg.seed = args.seed
    cfg.instantiation = _parse_sets(args.sets)
    return cfg


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _text_format(doc: dict) -> str:
    lines = []
    value = doc.get("value")
    if isinstance(value, dict):
        lines.append("value: [%.9g, %.9g]" % (value["min"], value["max"]))
    elif value is not None:
        lines.append("value: %.9g" % value)
    for key in ("coverage", "modularised"):
        if key in doc:
            lines.append("%s: %s" % (key, doc[key]))
    if "states" in doc:
        lines.append("states: %s" % json.dumps(doc["states"], sort_keys=True))
    return "\n".join(lines) + "\n"


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        if args.command == "analyze":
            cfg = _config_from(args)
            cfg.measure = _measure_arg(args.measure, args.conditional,
                                       args.event)
            ma = None
            if args.ma:
                with open(args.ma, "r", encoding="utf-8") as fh:
                    ma = import_ma_json(json.load(fh))
            doc = run_analyze(cfg, ma=ma)
            if args.export_dot or args.export_json:
                res = run_export(cfg, want_ma_dot=bool(args.export_dot),
                                 want_ma_json=bool(args.export_json))
                if args.export_dot:
                    _emit(res["artifacts"]["ma_dot"], args.export_dot)
                if args.export_json:
                    _emit(res["artifacts"]["ma_json"], args.export_json)
            out = to_json(doc) if args.format == "json" else _text_format(doc)
            _emit(out, args.out)
        elif args.command == "regions":
            cfg = _config_from(args)
            cfg.measure = _measure_arg(args.measure, args.conditional, None)
            cfg.threshold = Fraction(args.threshold)
            cfg.direction = args.direction
            cfg.box = _parse_box(args.box)
            cfg.coverage = args.coverage
            cfg.depth = args.depth
            cfg.validate_samples = args.validate_samples
            res = run_regions(cfg)
            if args.function:
                _emit(str(res["function"]) + "\n", None)
            _emit(res["csv"], args.out)
            sys.stderr.write(to_json(res["doc"]))
        else:
            cfg = _config_from(args)
            res = run_export(cfg, want_dft_dot=bool(args.dot),
                             want_ma_dot=bool(args.ma_dot),
                             want_ma_json=bool(args.ma_json))
            if args.dot:
                _emit(res["artifacts"]["dft_dot"], args.dot)
            if args.ma_dot:
                _emit(res["artifacts"]["ma_dot"], args.ma_dot)
            if args.ma_json:
                _emit(res["artifacts"]["ma_json"], args.ma_json)
            sys.stderr.write(to_json(res["doc"]))
    except (DftError, CompatibilityError, ValueError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2
    except (StateBudgetExceeded, UndefinedMeasure, NotModular,
            NondeterminismError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 3
    sys.stderr.write("wall time: %.3fs\n" % (time.perf_counter() - started))
    return 0


if __name__ == "__main__":
    sys.exit(main())
