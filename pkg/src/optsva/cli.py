"""Command line entry point: trace checkers and the benchmark harness.

Exit codes: 0 success (harmonious, opaque, run finished), 1 the property
does not hold, 2 bad input, 3 a search bound was exceeded or a scenario
deadlocked.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench_harness as bench
from .async_engine import DeadlockError
from .harmony_checker import DEFAULT_MAX_CHAIN_NODES, RULES, MalformedTraceError, check_harmony
from .luopacity_checker import DEFAULT_MAX_TXNS, LuBoundExceeded, check_lu_opaque
from .program import ProgramModel
from .trace_model import Trace

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BOUND = 0, 1, 2, 3


def _load_program(path: str) -> ProgramModel:
    text = Path(path).read_text()
    try:
        return ProgramModel.from_json(text)
    except json.JSONDecodeError:
        return bench.parse_scenario(text, Path(path).stem).program


def cmd_check_harmony(args: argparse.Namespace) -> int:
    trace = Trace.load(args.trace)
    report = check_harmony(trace, args.rule or None, args.max_chain_nodes)
    print(report.to_json())
    if report.violations:
        return EXIT_FAIL
    return EXIT_BOUND if report.bound_exceeded else EXIT_OK


def cmd_check_luopacity(args: argparse.Namespace) -> int:
    trace = Trace.load(args.trace)
    program = _load_program(args.program)
    try:
        verdict = check_lu_opaque(trace.history(), program, trace, max_txns=args.max_txns)
    except LuBoundExceeded as exc:
        print(json.dumps({"opaque": None, "bound_exceeded": True, "reason": str(exc)}, indent=2))
        return EXIT_BOUND
    print(verdict.to_json())
    return EXIT_OK if verdict.opaque else EXIT_FAIL


def _spec(args: argparse.Namespace) -> bench.WorkloadSpec:
    return bench.WorkloadSpec(
        threads=args.threads,
        txns_per_thread=args.txns,
        ops_per_txn=args.ops,
        rw_ratio=args.rw,
        hot_size=args.hot,
        locality=args.locality,
        latency=args.latency,
        seed=args.seed,
        abort_prob=args.abort_prob,
    )


def _append_csv(path: str, rows: list[dict]) -> None:
    target = Path(path)
    fresh = not target.exists() or target.stat().st_size == 0
    with open(target, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=bench.CSV_FIELDS)
        if fresh:
            writer.writeheader()
        writer.writerows(rows)


def cmd_bench_run(args: argparse.Namespace) -> int:
    spec = _spec(args)
    program = bench.generate(spec)
    metrics, trace = bench.run(program, args.engine, record=bool(args.record), latency=spec.latency,
                               threaded=not args.no_threads)
    if args.record:
        trace.dump(args.record)
    if args.program_out:
        Path(args.program_out).write_text(program.to_json() + "\n")
    if args.csv:
        _append_csv(args.csv, [bench.csv_row(spec, metrics)])
    print(json.dumps({"spec": asdict(spec), "metrics": metrics.summary()}, indent=2))
    return EXIT_OK


def cmd_bench_sweep(args: argparse.Namespace) -> int:
    rows = bench.sweep(range(args.seed, args.seed + args.seeds), args.threads, args.txns, args.latency,
                       threaded=args.threads_wall)
    _append_csv(args.out, rows)
    for row in bench.compare(rows):
        print(f"{row.label:28s} sva={row.sva_makespan:10.1f} optsva={row.optsva_makespan:10.1f} gain={row.gain:5.1f}%")
    return EXIT_OK


def cmd_bench_replay(args: argparse.Namespace) -> int:
    scenario = bench.load_scenario(args.script)
    if args.engine:
        scenario.engine = args.engine
    try:
        trace, outcome = bench.replay_with_outcome(scenario)
    except DeadlockError as exc:
        print(f"scenario deadlocked: {exc}", file=sys.stderr)
        return EXIT_BOUND
    if args.out:
        trace.dump(args.out)
    else:
        sys.stdout.write(trace.to_jsonl())
    if args.program_out:
        Path(args.program_out).write_text(scenario.program.to_json() + "\n")
    summary = {f"T{t}": o.status + (" (forced)" if o.forced else "") for t, o in sorted(outcome.txns.items())}
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def cmd_bench_report(args: argparse.Namespace) -> int:
    rows = bench.read_csv(args.csv)
    table = bench.report(rows, args.out_dir, chart=not args.no_chart)
    print(json.dumps([asdict(r) for r in table], indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optsva", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-harmony", help="check a recorded trace against the harmony rules")
    p.add_argument("trace")
    p.add_argument("--rule", action="append", choices=RULES, help="only this rule (repeatable)")
    p.add_argument("--max-chain-nodes", type=int, default=DEFAULT_MAX_CHAIN_NODES)
    p.set_defaults(func=cmd_check_harmony)

    p = sub.add_parser("check-luopacity", help="decide last-use opacity of a recorded trace")
    p.add_argument("trace")
    p.add_argument("--program", required=True, help="program JSON or scenario script that produced the trace")
    p.add_argument("--max-txns", type=int, default=DEFAULT_MAX_TXNS)
    p.set_defaults(func=cmd_check_luopacity)

    b = sub.add_parser("bench", help="workloads, scenario replays and reports")
    bsub = b.add_subparsers(dest="bench_command", required=True)

    p = bsub.add_parser("run", help="generate one workload and run it")
    p.add_argument("--engine", choices=sorted(bench.ENGINES), default="optsva")
    p.add_argument("--threads", type=int, default=8)
    p.add_argument("--txns", type=int, default=10, help="transactions per thread")
    p.add_argument("--ops", type=int, choices=(5, 10), default=5)
    p.add_argument("--rw", choices=("5:1", "1:5"), default="5:1")
    p.add_argument("--hot", type=int, choices=(20, 80), default=20)
    p.add_argument("--locality", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latency", type=int, default=bench.DEFAULT_LATENCY)
    p.add_argument("--abort-prob", type=float, default=0.0)
    p.add_argument("--record", metavar="TRACE", help="write the simulated run's trace here")
    p.add_argument("--program-out", metavar="JSON", help="write the generated program here")
    p.add_argument("--csv", metavar="FILE", help="append the metrics row to this CSV")
    p.add_argument("--no-threads", action="store_true", help="skip the timed run on OS threads")
    p.set_defaults(func=cmd_bench_run)

    p = bsub.add_parser("sweep", help="both engines over the eight length/ratio/contention configurations")
    p.add_argument("--seeds", type=int, default=30)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--threads", type=int, default=8)
    p.add_argument("--txns", type=int, default=10)
    p.add_argument("--latency", type=int, default=bench.DEFAULT_LATENCY)
    p.add_argument("--threads-wall", action="store_true", help="also time each run on OS threads")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_bench_sweep)

    p = bsub.add_parser("replay", help="replay a scenario script (or a bundled figure by name)")
    p.add_argument("script", help=f"path, or one of: {', '.join(bench.FIGURES)}")
    p.add_argument("--engine", choices=sorted(bench.ENGINES))
    p.add_argument("--out", metavar="TRACE")
    p.add_argument("--program-out", metavar="JSON")
    p.set_defaults(func=cmd_bench_replay)

    p = bsub.add_parser("report", help="compare engines over CSV run files")
    p.add_argument("csv", nargs="*")
    p.add_argument("--out-dir", help="write comparison.csv/.json/.png here")
    p.add_argument("--no-chart", action="store_true")
    p.set_defaults(func=cmd_bench_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MalformedTraceError, bench.ScenarioError, bench.WorkloadError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
