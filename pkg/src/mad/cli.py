"""Command-line entry point.

`mad analyze` runs the full pipeline — parse inputs, chop transactions
along the decomposition, search every relevant functionality subset for
dependency cycles, classify the witnesses — and writes report.json (plus
optional text tables) into the output directory. `mad oracle` runs the
independent brute-force schedule enumerator for manual cross-checks.

Exit codes: 0 for a complete run, 2 for a partial one (timeouts, caps,
per-subset errors, bounded oracle enumeration), 1 for input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from .ar import ArError
from .chopper import MicroservicesAR, chop
from .classify import classify_witnesses, group_metrics
from .frontend import parse_decomposition, parse_functionalities, parse_schema
from .oracle import ConcreteDomain, oracle_has_anomaly
from .orchestrator import (
    DEFAULT_GLOBAL_TIMEOUT,
    AnalysisConfig,
    run_analysis,
)
from .report import build_report, render_tables, report_json
from .solver import DEFAULT_CHECK_TIMEOUT, DEFAULT_MODEL_CAP


class _InputError(Exception):
    """Invalid arguments or unreadable/invalid input files."""


def _add_input_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--schema", required=True, metavar="SQL",
                        help="CREATE TABLE schema file")
    parser.add_argument("--functionalities", required=True, metavar="JSON",
                        help="functionality definitions (parameters + statements)")
    parser.add_argument("--decomposition", required=True, metavar="JSON",
                        help="microservice name -> table list mapping")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mad",
        description="Detect serializability anomalies a microservice "
                    "decomposition introduces into a monolith's transactions.")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser(
        "analyze", help="run the full anomaly search and write reports")
    _add_input_arguments(analyze)
    analyze.add_argument("--mcl", type=int, default=4,
                         help="maximum cycle length (default 4)")
    analyze.add_argument("--threads", type=int, default=None,
                         help="solver worker threads (default: min(8, cpus))")
    analyze.add_argument("--no-divide-and-conquer", action="store_true",
                         help="solve one whole-program problem instead of "
                              "per-subset problems")
    analyze.add_argument("--solver", default=None, metavar="PATH",
                         help="SMT solver binary (default: $MAD_SOLVER or z3)")
    analyze.add_argument("--solver-timeout", type=float,
                         default=DEFAULT_CHECK_TIMEOUT, metavar="S",
                         help="per-query solver budget in seconds")
    analyze.add_argument("--global-timeout", type=float,
                         default=DEFAULT_GLOBAL_TIMEOUT, metavar="S",
                         help="whole-analysis budget in seconds")
    analyze.add_argument("--model-cap", type=int, default=DEFAULT_MODEL_CAP,
                         help="stop enumerating a subset after this many models")
    analyze.add_argument("--emit-chop", action="store_true",
                         help="also write chop.json (the sub-transaction split)")
    analyze.add_argument("--dump-smt", default=None, metavar="DIR",
                         help="write every generated SMT-LIB2 problem here")
    analyze.add_argument("--format", choices=("json", "table", "both"),
                         default="both",
                         help="report artifacts to produce (default both)")
    analyze.add_argument("-o", "--output", required=True, metavar="OUT_DIR",
                         help="output directory (created if missing)")

    oracle = sub.add_parser(
        "oracle", help="brute-force schedule enumeration over a tiny domain")
    _add_input_arguments(oracle)
    oracle.add_argument("--instances", type=int, default=2,
                        help="instances per functionality (default 2)")
    oracle.add_argument("--rows", type=int, default=1,
                        help="rows per table (default 1)")
    oracle.add_argument("--subset", nargs="+", default=None, metavar="NAME",
                        help="functionality names to run (default: all)")
    oracle.add_argument("--bound", type=int, default=None,
                        help="stop after this many schedules (verdict best-effort)")
    return parser


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror or exc}") from exc


def _load_microservices(args: argparse.Namespace) -> MicroservicesAR:
    schema_text = _read(args.schema)
    functionalities_text = _read(args.functionalities)
    decomposition_text = _read(args.decomposition)
    try:
        schema = parse_schema(schema_text, source=args.schema)
        monolith = parse_functionalities(functionalities_text, schema,
                                         source=args.functionalities)
        decomposition = parse_decomposition(decomposition_text, schema,
                                            source=args.decomposition)
        return chop(monolith, decomposition)
    except ArError as exc:
        raise _InputError(str(exc)) from exc


def _ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror or exc}") from exc


def _chop_document(micro: MicroservicesAR) -> dict:
    return {
        "sub_transactions": [{
            "name": s.name,
            "functionality": s.original_transaction,
            "microservice": s.microservice,
            "statements": [op.name for op in s.operations],
        } for s in micro.sub_transactions],
    }


def _run_analyze(args: argparse.Namespace) -> int:
    micro = _load_microservices(args)
    try:
        config = AnalysisConfig(
            mcl=args.mcl,
            threads=args.threads,
            divide_and_conquer=not args.no_divide_and_conquer,
            solver=args.solver,
            check_timeout=args.solver_timeout,
            model_cap=args.model_cap,
            global_timeout=args.global_timeout,
        )
    except ArError as exc:
        raise _InputError(str(exc)) from exc
    _ensure_dir(args.output)
    if args.dump_smt is not None:
        _ensure_dir(args.dump_smt)

    result = run_analysis(micro, config, dump_dir=args.dump_smt)
    metrics = group_metrics(classify_witnesses(result.witnesses, micro))
    report = build_report(result, metrics, config)

    with open(os.path.join(args.output, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report_json(report))
    if args.format in ("table", "both"):
        tables = render_tables(report)
        with open(os.path.join(args.output, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(tables)
        sys.stdout.write(tables)
    if args.emit_chop:
        with open(os.path.join(args.output, "chop.json"), "w", encoding="utf-8") as fh:
            json.dump(_chop_document(micro), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if report["status"] == "complete" else 2


def _run_oracle(args: argparse.Namespace) -> int:
    micro = _load_microservices(args)
    known = micro.monolith.functionality_names()
    subset = tuple(args.subset) if args.subset else tuple(known)
    for name in subset:
        if name not in known:
            raise _InputError(f"unknown functionality {name!r}; "
                              f"available: {', '.join(known)}")
    try:
        dom = ConcreteDomain(rows_per_table=args.rows,
                             instances_per_functionality=args.instances)
        verdict = oracle_has_anomaly(micro, subset, dom, bound=args.bound)
    except ArError as exc:
        raise _InputError(str(exc)) from exc
    document = {
        "subset": list(subset),
        "anomalous": verdict.anomalous,
        "partial": verdict.partial,
        "schedules_checked": verdict.schedules_checked,
        "domain": {
            "rows_per_table": args.rows,
            "instances_per_functionality": args.instances,
        },
    }
    sys.stdout.write(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return 2 if verdict.partial else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            return _run_analyze(args)
        return _run_oracle(args)
    except _InputError as exc:
        print(f"mad: error: {exc}", file=sys.stderr)
        return 1
    except ArError as exc:
        # late pipeline failures (e.g. no usable solver) — still an input
        # problem from the caller's point of view
        print(f"mad: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
