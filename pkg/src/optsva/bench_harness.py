"""Workload generation, simulated and threaded runs, scenario replay, reports.

Workloads follow the EigenBench recipe: every operation touches a variable
from a shared hot array, with a given probability it revisits one of the
thread's recently used variables, and reads and writes are mixed at a fixed
ratio.  Each transaction declares exactly the reads and writes it performs.

The logical makespan comes from a run under the deterministic scheduler in
simulated time: engine events take no time, every read or write is followed
by ``latency`` ticks of work.  Transactions start in a fixed round-robin
order so both engines hand out the same private versions.
"""

from __future__ import annotations

import csv
import json
import random
import re
import statistics
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .async_engine import first_enabled, random_policy
from .program import Op, ProgramModel, RunOutcome, TxnScript, run_scheduled, run_threaded
from .sva_baseline import SvaEngine
from .tm_core import OptSvaEngine, VersionedEngine
from .trace_model import Trace, TraceRecorder

ENGINES: dict[str, type[VersionedEngine]] = {"optsva": OptSvaEngine, "sva": SvaEngine}
DEFAULT_LATENCY = 100


class WorkloadError(ValueError):
    """The workload parameters cannot produce a program."""


class ScenarioError(ValueError):
    """A scenario script does not parse."""

    def __init__(self, lineno: int, message: str) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_ratio(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[:/]\s*(\d+)\s*", text)
    if not m:
        raise WorkloadError(f"bad read:write ratio {text!r}")
    reads, writes = int(m.group(1)), int(m.group(2))
    if reads + writes == 0:
        raise WorkloadError("read:write ratio 0:0")
    return reads, writes


@dataclass(frozen=True)
class WorkloadSpec:
    threads: int = 8
    txns_per_thread: int = 10
    ops_per_txn: int = 5
    rw_ratio: str = "5:1"
    hot_size: int = 20
    # per-thread arrays nobody else touches, and operations on them per txn
    mild_size: int = 0
    mild_ops: int = 0
    # non-transactional work per txn, one latency unit each
    cold_ops: int = 0
    locality: float = 0.5
    history: int = 5
    latency: int = DEFAULT_LATENCY
    seed: int = 0
    abort_prob: float = 0.0

    def validate(self) -> None:
        parse_ratio(self.rw_ratio)
        if self.threads < 0 or self.txns_per_thread < 0:
            raise WorkloadError("negative thread or transaction count")
        if self.ops_per_txn < 0 or self.mild_ops < 0 or self.cold_ops < 0:
            raise WorkloadError("negative operation count")
        if self.ops_per_txn and self.hot_size < 1:
            raise WorkloadError("hot operations need a non-empty hot array")
        if self.mild_ops and self.mild_size < 1:
            raise WorkloadError("mild operations need a non-empty mild array")
        if not 0.0 <= self.locality <= 1.0 or not 0.0 <= self.abort_prob <= 1.0:
            raise WorkloadError("probabilities must lie in [0, 1]")
        if self.history < 0 or self.latency < 0:
            raise WorkloadError("negative history length or latency")

    @property
    def contention(self) -> str:
        return "high" if self.hot_size <= 20 else "low"

    @property
    def label(self) -> str:
        length = "short" if self.ops_per_txn <= 5 else "long"
        return f"{length}, RW {self.rw_ratio}, {self.contention} cont."


def hot_name(i: int) -> str:
    return f"h{i}"


def generate(spec: WorkloadSpec) -> ProgramModel:
    """A seeded program; bounds are the per-variable operation counts."""
    spec.validate()
    reads, writes = parse_ratio(spec.rw_ratio)
    p_read = reads / (reads + writes)
    rng = random.Random(spec.seed)
    hot = [hot_name(i) for i in range(spec.hot_size)]
    variables = list(hot)
    next_value = 0
    txns: list[TxnScript] = []
    for thread in range(spec.threads):
        mild = [f"m{thread}_{i}" for i in range(spec.mild_size)] if spec.mild_ops else []
        variables.extend(mild)
        recent: deque[str] = deque(maxlen=spec.history)
        for k in range(spec.txns_per_thread):
            ops: list[Op] = []
            for _ in range(spec.ops_per_txn):
                if recent and rng.random() < spec.locality:
                    var = rng.choice(list(recent))
                else:
                    var = rng.choice(hot)
                if var in recent:
                    recent.remove(var)
                recent.append(var)
                if rng.random() < p_read:
                    ops.append(Op("read", var))
                else:
                    next_value += 1
                    ops.append(Op("write", var, next_value))
            for _ in range(spec.mild_ops):
                var = rng.choice(mild)
                pos = rng.randint(0, len(ops))
                if rng.random() < p_read:
                    ops.insert(pos, Op("read", var))
                else:
                    next_value += 1
                    ops.insert(pos, Op("write", var, next_value))
            for _ in range(spec.cold_ops):
                ops.insert(rng.randint(0, len(ops)), Op("sleep", value=spec.latency))
            ops.append(Op("abort") if rng.random() < spec.abort_prob else Op("commit"))
            txns.append(TxnScript(thread * spec.txns_per_thread + k + 1, thread, ops))
    return ProgramModel(variables, txns)


@dataclass
class RunMetrics:
    engine: str
    makespan: int
    ops: int
    committed: int
    forced_aborts: int
    manual_aborts: int
    wall_time: float | None = None
    release_times: dict[tuple[int, str], int] = field(default_factory=dict, repr=False)
    completion_times: dict[tuple[int, str], int] = field(default_factory=dict, repr=False)

    @property
    def throughput(self) -> float | None:
        """Operations per wall-clock second of the threaded run."""
        if not self.wall_time:
            return None
        return self.ops / self.wall_time

    @property
    def logical_throughput(self) -> float:
        """Operations per 1000 simulated ticks."""
        return 1000.0 * self.ops / self.makespan if self.makespan else 0.0

    def summary(self) -> dict[str, Any]:
        return {
            "engine": self.engine,
            "makespan": self.makespan,
            "ops": self.ops,
            "committed": self.committed,
            "forced_aborts": self.forced_aborts,
            "manual_aborts": self.manual_aborts,
            "logical_throughput": round(self.logical_throughput, 3),
            "wall_time": self.wall_time,
            "throughput": None if self.throughput is None else round(self.throughput, 1),
        }


def simulate(
    program: ProgramModel, engine: str = "optsva", latency: int = DEFAULT_LATENCY, record: bool = False
) -> tuple[RunMetrics, RunOutcome, Trace | None]:
    recorder = TraceRecorder() if record else None
    eng = ENGINES[engine](program.variables, recorder)
    sched, outcome = run_scheduled(eng, program, first_enabled, latency=latency, ordered_starts=True)
    metrics = RunMetrics(
        engine=engine,
        makespan=sched.now,
        ops=program.op_count,
        committed=len(outcome.committed),
        forced_aborts=outcome.forced_aborts,
        manual_aborts=outcome.manual_aborts,
        release_times=dict(eng.release_times),
        completion_times=dict(eng.completion_times),
    )
    return metrics, outcome, recorder.seal() if recorder else None


def run(
    program: ProgramModel,
    engine: str = "optsva",
    record: bool = False,
    latency: int = DEFAULT_LATENCY,
    threaded: bool = True,
) -> tuple[RunMetrics, Trace | None]:
    """Simulated run for the logical metrics, plus a timed run on OS threads."""
    if engine not in ENGINES:
        raise WorkloadError(f"unknown engine {engine!r}")
    metrics, _, trace = simulate(program, engine, latency, record)
    if threaded:
        eng = ENGINES[engine](program.variables)
        began = time.perf_counter()
        run_threaded(eng, program)
        metrics.wall_time = time.perf_counter() - began
    return metrics, trace


# ---------------------------------------------------------------------------
# scenario scripts
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    program: ProgramModel
    engine: str = "optsva"
    name: str = ""


_LINE = re.compile(r"thread\s+(\d+)\s*:(.*)")


def parse_scenario(text: str, name: str = "") -> Scenario:
    """Parse the line-oriented scenario format (see the README).

    Transactions are numbered in the order their commit or abort step
    appears.  Barriers and sleeps in front of a transaction run before it
    starts; trailing ones after a thread's last transaction run after it
    finished.
    """
    engine = "optsva"
    pending: dict[int, list[Op]] = {}
    bounds: dict[int, dict[str, tuple[int, int]]] = {}
    started: dict[int, bool] = {}
    finished: dict[int, list[TxnScript]] = {}
    order: list[TxnScript] = []
    variables: list[str] = []
    counter = 0

    def note(var: str) -> None:
        if var not in variables:
            variables.append(var)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("engine"):
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ENGINES:
                raise ScenarioError(lineno, f"engine must be one of {sorted(ENGINES)}")
            engine = parts[1]
            continue
        m = _LINE.fullmatch(line)
        if not m:
            raise ScenarioError(lineno, f"expected 'thread <id>: ...', got {line!r}")
        thread = int(m.group(1))
        for item in m.group(2).split("|"):
            words = item.split()
            if not words:
                raise ScenarioError(lineno, "empty step")
            kind, args = words[0], words[1:]
            arity = {"read": 1, "write": 2, "barrier": 1, "sleep": 1, "declare": 3, "start": 0, "commit": 0, "abort": 0}
            if kind not in arity:
                raise ScenarioError(lineno, f"unknown step {kind!r}")
            if len(args) != arity[kind]:
                raise ScenarioError(lineno, f"{kind} takes {arity[kind]} argument(s)")
            ops = pending.setdefault(thread, [])
            try:
                if kind == "declare":
                    note(args[0])
                    bounds.setdefault(thread, {})[args[0]] = (int(args[1]), int(args[2]))
                    started[thread] = True
                    continue
                if kind == "read":
                    note(args[0])
                    op = Op("read", args[0])
                elif kind == "write":
                    note(args[0])
                    op = Op("write", args[0], int(args[1]))
                elif kind == "sleep":
                    op = Op("sleep", value=int(args[0]))
                elif kind == "barrier":
                    op = Op("barrier", args[0])
                else:
                    op = Op(kind)
            except ValueError as exc:
                raise ScenarioError(lineno, str(exc)) from None
            ops.append(op)
            if kind not in ("barrier", "sleep"):
                started[thread] = True
            if kind in ("commit", "abort"):
                counter += 1
                script = TxnScript(counter, thread, ops, bounds.pop(thread, None) or None)
                finished.setdefault(thread, []).append(script)
                order.append(script)
                pending[thread] = []
                started[thread] = False
    for thread, ops in pending.items():
        if started.get(thread):
            raise ScenarioError(0, f"thread {thread} ends inside a transaction")
        if ops:
            if not finished.get(thread):
                raise ScenarioError(0, f"thread {thread} has no transaction")
            finished[thread][-1].ops.extend(ops)
    return Scenario(ProgramModel(variables, order), engine, name)


def load_scenario(source: str | Path) -> Scenario:
    """A scenario from a file path, or a bundled figure scenario by name."""
    path = Path(source)
    if path.exists():
        return parse_scenario(path.read_text(), path.stem)
    if str(source) in FIGURES:
        return figure(str(source))
    raise FileNotFoundError(f"no scenario file or bundled figure named {source!r}")


def replay(scenario: Scenario | str | Path) -> Trace:
    """Run a scenario under the deterministic scheduler in simulated time."""
    trace, _ = replay_with_outcome(scenario)
    return trace


def replay_with_outcome(scenario: Scenario | str | Path) -> tuple[Trace, RunOutcome]:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    recorder = TraceRecorder()
    eng = ENGINES[scenario.engine](scenario.program.variables, recorder)
    _, outcome = run_scheduled(eng, scenario.program, first_enabled)
    return recorder.seal(), outcome


FIGURES = (
    "access-control",
    "early-release",
    "commit-order",
    "forced-abort",
    "read-only",
    "initial-writes",
    "final-writes",
)


def figure(name: str) -> Scenario:
    if name not in FIGURES:
        raise KeyError(name)
    text = resources.files("optsva").joinpath("scenarios", f"{name}.scn").read_text()
    return parse_scenario(text, name)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

CSV_FIELDS = (
    "engine",
    "threads",
    "txns",
    "ops",
    "rw",
    "hot",
    "locality",
    "latency",
    "seed",
    "makespan",
    "logical_throughput",
    "wall_time",
    "throughput",
    "forced_aborts",
    "manual_aborts",
    "committed",
    "executed_ops",
)


def csv_row(spec: WorkloadSpec, metrics: RunMetrics) -> dict[str, Any]:
    return {
        "engine": metrics.engine,
        "threads": spec.threads,
        "txns": spec.txns_per_thread,
        "ops": spec.ops_per_txn,
        "rw": spec.rw_ratio,
        "hot": spec.hot_size,
        "locality": spec.locality,
        "latency": spec.latency,
        "seed": spec.seed,
        "makespan": metrics.makespan,
        "logical_throughput": round(metrics.logical_throughput, 3),
        "wall_time": "" if metrics.wall_time is None else round(metrics.wall_time, 6),
        "throughput": "" if metrics.throughput is None else round(metrics.throughput, 1),
        "forced_aborts": metrics.forced_aborts,
        "manual_aborts": metrics.manual_aborts,
        "committed": metrics.committed,
        "executed_ops": metrics.ops,
    }


def write_csv(rows: list[dict[str, Any]], out: Any) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS)
    writer.writeheader()
    writer.writerows(rows)


def read_csv(paths: list[Path | str]) -> list[dict[str, str]]:
    rows: list[dict[str, str]] = []
    for path in paths:
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


def gain_pct(sva: float, optsva: float) -> float:
    """How much shorter OptSVA's time is, in percent of SVA's."""
    return 100.0 * (sva - optsva) / sva if sva else 0.0


@dataclass
class ComparisonRow:
    label: str
    ops: int
    rw: str
    hot: int
    runs: int
    sva_makespan: float
    optsva_makespan: float
    sva_throughput: float
    optsva_throughput: float
    gain: float

    @property
    def contention(self) -> str:
        return WorkloadSpec(ops_per_txn=self.ops, rw_ratio=self.rw, hot_size=self.hot).contention


def compare(rows: list[dict[str, Any]]) -> list[ComparisonRow]:
    """Pair runs by configuration; one row per configuration with both engines."""
    groups: dict[tuple[int, str, int], dict[str, list[dict[str, Any]]]] = {}
    for row in rows:
        key = (int(row["ops"]), str(row["rw"]), int(row["hot"]))
        groups.setdefault(key, {}).setdefault(str(row["engine"]), []).append(row)
    out = []
    for (ops, rw, hot), by_engine in groups.items():
        if "sva" not in by_engine or "optsva" not in by_engine:
            continue
        sva = statistics.fmean(float(r["makespan"]) for r in by_engine["sva"])
        opt = statistics.fmean(float(r["makespan"]) for r in by_engine["optsva"])
        sva_tp = statistics.fmean(float(r["logical_throughput"]) for r in by_engine["sva"])
        opt_tp = statistics.fmean(float(r["logical_throughput"]) for r in by_engine["optsva"])
        spec = WorkloadSpec(ops_per_txn=ops, rw_ratio=rw, hot_size=hot)
        runs = min(len(by_engine["sva"]), len(by_engine["optsva"]))
        out.append(ComparisonRow(spec.label, ops, rw, hot, runs, sva, opt, sva_tp, opt_tp, gain_pct(sva, opt)))
    # high contention first, then short before long, reads-heavy first
    out.sort(key=lambda r: (r.contention != "high", r.ops, -parse_ratio(r.rw)[0]))
    return out


def report(rows: list[dict[str, Any]], out_dir: Path | str | None = None, chart: bool = True) -> list[ComparisonRow]:
    """Write comparison.csv, comparison.json and comparison.png into ``out_dir``."""
    table = compare(rows)
    if out_dir is None:
        return table
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = [asdict(r) for r in table]
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(ComparisonRow.__dataclass_fields__))
        writer.writeheader()
        writer.writerows(records)
    (out / "comparison.json").write_text(json.dumps(records, indent=1) + "\n")
    if chart and table:
        _chart(table, out / "comparison.png")
    return table


def _chart(table: list[ComparisonRow], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    xs = range(len(table))
    width = 0.4
    ax.bar([x - width / 2 for x in xs], [r.sva_makespan for r in table], width, label="SVA")
    ax.bar([x + width / 2 for x in xs], [r.optsva_makespan for r in table], width, label="OptSVA")
    for x, r in zip(xs, table):
        ax.annotate(f"{r.gain:.1f}%", (x, max(r.sva_makespan, r.optsva_makespan)), ha="center", va="bottom", fontsize=8)
    ax.set_xticks(list(xs), [r.label for r in table], rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("logical makespan [ticks]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


SWEEP_CONFIGS = tuple(
    (ops, rw, hot) for hot in (20, 80) for ops in (5, 10) for rw in ("5:1", "1:5")
)


def sweep(seeds: range, threads: int = 8, txns: int = 10, latency: int = DEFAULT_LATENCY,
          threaded: bool = False) -> list[dict[str, Any]]:
    """Both engines over the eight length/ratio/contention configurations."""
    rows = []
    for ops, rw, hot in SWEEP_CONFIGS:
        for seed in seeds:
            spec = WorkloadSpec(threads=threads, txns_per_thread=txns, ops_per_txn=ops, rw_ratio=rw,
                                hot_size=hot, latency=latency, seed=seed)
            program = generate(spec)
            for engine in ("sva", "optsva"):
                metrics, _ = run(program, engine, latency=latency, threaded=threaded)
                rows.append(csv_row(spec, metrics))
    return rows


def stress_program(
    seed: int,
    max_txns: int = 5,
    max_vars: int = 3,
    abort_prob: float = 0.2,
    spare_write_prob: float = 0.3,
) -> ProgramModel:
    """A small random program for safety stress runs.

    Two to ``max_txns`` transactions over one to ``max_vars`` variables,
    each ends in a manual abort with probability ``abort_prob`` (possibly
    cut short).  Some transactions declare one write more than they
    perform, so their last write is not closing and the update happens at
    commit.
    """
    rng = random.Random(seed)
    variables = [f"v{i}" for i in range(rng.randint(1, max_vars))]
    count = rng.randint(2, max_txns)
    threads = rng.randint(2, min(count, 4))
    value = 0
    txns = []
    for txn in range(1, count + 1):
        ops: list[Op] = []
        for _ in range(rng.randint(1, 4)):
            var = rng.choice(variables)
            if rng.random() < 0.5:
                ops.append(Op("read", var))
            else:
                value += 1
                ops.append(Op("write", var, value))
        if rng.random() < abort_prob:
            ops = ops[: rng.randint(0, len(ops))] + [Op("abort")]
        else:
            ops.append(Op("commit"))
        bounds = None
        if rng.random() < spare_write_prob:
            counted = TxnScript(txn, 0, ops).counted_bounds()
            bounds = {v: (r, w + rng.randint(0, 1)) for v, (r, w) in counted.items()}
        txns.append(TxnScript(txn, rng.randrange(threads), ops, bounds))
    return ProgramModel(variables, txns)


def stress_run(seed: int, engine: str = "optsva", **program_args: Any) -> tuple[ProgramModel, RunOutcome, Trace]:
    """``stress_program(seed)`` under a seeded random schedule, with its trace."""
    program = stress_program(seed, **program_args)
    recorder = TraceRecorder()
    eng = ENGINES[engine](program.variables, recorder)
    _, outcome = run_scheduled(eng, program, random_policy(seed))
    return program, outcome, recorder.seal()
