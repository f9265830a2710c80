"""Transactional programs and the interpreters that drive an engine with them.

A program assigns each thread a list of transaction scripts.  A script is a
list of operations ending in ``commit`` or ``abort``; it may also contain
``barrier`` steps (scenario synchronisation), ``sleep`` steps (simulated
time spent outside the engine) and an explicit ``start``.
Declared bounds default to the per-variable operation counts.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .async_engine import Barrier, Policy, Scheduler, Sleep, StartTickets, Steps, explore, first_enabled
from .tm_core import TxnAborted, TxnDescriptor, TxnHandle, VersionedEngine, engine_state

OP_KINDS = ("start", "read", "write", "commit", "abort", "barrier", "sleep")


@dataclass(frozen=True)
class Op:
    kind: str
    var: str | None = None
    value: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown operation {self.kind!r}")

    def to_list(self) -> list[Any]:
        out: list[Any] = [self.kind]
        if self.var is not None:
            out.append(self.var)
        if self.value is not None:
            out.append(self.value)
        return out

    @classmethod
    def from_list(cls, raw: list[Any]) -> Op:
        kind = raw[0]
        if kind == "sleep":
            return cls(kind, None, int(raw[1]))
        var = raw[1] if len(raw) > 1 else None
        value = int(raw[2]) if len(raw) > 2 else None
        return cls(kind, var, value)

    def __str__(self) -> str:
        return " ".join(str(p) for p in self.to_list())


@dataclass
class TxnScript:
    txn: int
    thread: int
    ops: list[Op]
    bounds: dict[str, tuple[int, int]] | None = None

    def counted_bounds(self) -> dict[str, tuple[int, int]]:
        reads = Counter(op.var for op in self.ops if op.kind == "read")
        writes = Counter(op.var for op in self.ops if op.kind == "write")
        names = set(reads) | set(writes)
        return {v: (reads[v], writes[v]) for v in sorted(names)}

    def descriptor(self) -> TxnDescriptor:
        bounds = self.counted_bounds()
        if self.bounds:
            bounds.update(self.bounds)
        return TxnDescriptor.of(bounds)

    @property
    def ends_in_abort(self) -> bool:
        return any(op.kind == "abort" for op in self.ops)


@dataclass
class ProgramModel:
    variables: list[str]
    txns: list[TxnScript]

    def threads(self) -> dict[int, list[TxnScript]]:
        out: dict[int, list[TxnScript]] = {}
        for script in self.txns:
            out.setdefault(script.thread, []).append(script)
        return out

    def script(self, txn: int) -> TxnScript:
        for s in self.txns:
            if s.txn == txn:
                return s
        raise KeyError(txn)

    @property
    def op_count(self) -> int:
        return sum(1 for s in self.txns for op in s.ops if op.kind in ("read", "write"))

    def to_json(self) -> str:
        return json.dumps(
            {
                "variables": self.variables,
                "transactions": [
                    {
                        "txn": s.txn,
                        "thread": s.thread,
                        "ops": [op.to_list() for op in s.ops],
                        **({"bounds": {v: list(b) for v, b in s.bounds.items()}} if s.bounds else {}),
                    }
                    for s in self.txns
                ],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> ProgramModel:
        raw = json.loads(text)
        txns = [
            TxnScript(
                txn=int(t["txn"]),
                thread=int(t["thread"]),
                ops=[Op.from_list(op) for op in t["ops"]],
                bounds={v: (int(b[0]), int(b[1])) for v, b in t["bounds"].items()} if t.get("bounds") else None,
            )
            for t in raw["transactions"]
        ]
        return cls(list(raw["variables"]), txns)

    @classmethod
    def load(cls, path: Path | str) -> ProgramModel:
        return cls.from_json(Path(path).read_text())


@dataclass
class TxnOutcome:
    txn: int
    status: str = "live"
    forced: bool = False
    reads: list[tuple[str, int]] = field(default_factory=list)


@dataclass
class RunOutcome:
    txns: dict[int, TxnOutcome] = field(default_factory=dict)

    @property
    def forced_aborts(self) -> int:
        return sum(1 for o in self.txns.values() if o.forced)

    @property
    def manual_aborts(self) -> int:
        return sum(1 for o in self.txns.values() if o.status == "aborted" and not o.forced)

    @property
    def committed(self) -> list[int]:
        return [t for t, o in self.txns.items() if o.status == "committed"]


def _barriers(program: ProgramModel) -> dict[str, Barrier]:
    parties: dict[str, set[int]] = {}
    for s in program.txns:
        for op in s.ops:
            if op.kind == "barrier":
                parties.setdefault(op.var, set()).add(s.thread)
    return {name: Barrier(name, len(threads)) for name, threads in parties.items()}


def thread_steps(
    engine: VersionedEngine,
    scripts: list[TxnScript],
    outcome: RunOutcome,
    barriers: dict[str, Barrier],
    latency: int = 0,
    tickets: StartTickets | None = None,
) -> Steps[None]:
    """One thread's program as a step generator."""
    for script in scripts:
        record = outcome.txns.setdefault(script.txn, TxnOutcome(script.txn))
        t: TxnHandle | None = None
        dead = False
        desc = script.descriptor()

        def begin() -> Steps[TxnHandle]:
            if tickets is not None:
                yield from tickets.wait_turn(script.txn)
            handle = yield from engine.start_steps(desc, script.txn)
            if tickets is not None:
                tickets.advance()
            return handle

        for op in script.ops:
            if op.kind == "barrier":
                yield from barriers[op.var].arrive()
                continue
            if op.kind == "sleep":
                yield Sleep(op.value)
                continue
            if dead:
                continue
            if t is None:
                t = yield from begin()
                if op.kind == "start":
                    continue
            try:
                if op.kind == "read":
                    record.reads.append((op.var, (yield from engine.read_steps(t, op.var))))
                elif op.kind == "write":
                    yield from engine.write_steps(t, op.var, op.value)
                elif op.kind == "commit":
                    yield from engine.commit_steps(t)
                    record.status = "committed"
                elif op.kind == "abort":
                    yield from engine.abort_steps(t)
                    record.status = "aborted"
            except TxnAborted:
                record.status, record.forced, dead = "aborted", True, True
                continue
            if op.kind in ("read", "write") and latency:
                yield Sleep(latency)
        if t is None:
            # script without any operation still starts and commits
            t = yield from begin()
            yield from engine.commit_steps(t)
            record.status = "committed"


def run_scheduled(
    engine: VersionedEngine,
    program: ProgramModel,
    policy: Policy = first_enabled,
    latency: int = 0,
    ordered_starts: bool = False,
) -> tuple[Scheduler, RunOutcome]:
    """Run ``program`` one atomic segment at a time under ``policy``."""
    sched, outcome = build_scheduled(engine, program, policy, latency, ordered_starts)
    sched.run()
    return sched, outcome


def build_scheduled(
    engine: VersionedEngine,
    program: ProgramModel,
    policy: Policy = first_enabled,
    latency: int = 0,
    ordered_starts: bool = False,
) -> tuple[Scheduler, RunOutcome]:
    sched = Scheduler(engine.tasks, policy)
    engine.clock = lambda: sched.now
    outcome = RunOutcome()
    barriers = _barriers(program)
    tickets = None
    threads = program.threads()
    if ordered_starts:
        rounds = max((len(v) for v in threads.values()), default=0)
        order = [threads[th][r].txn for r in range(rounds) for th in sorted(threads) if r < len(threads[th])]
        tickets = StartTickets(order)
    for th in sorted(threads):
        sched.spawn(f"thread{th}", thread_steps(engine, threads[th], outcome, barriers, latency, tickets))
    return sched, outcome


def run_threaded(engine: VersionedEngine, program: ProgramModel) -> RunOutcome:
    """Run ``program`` with one OS thread per program thread."""
    outcome = RunOutcome()
    barriers = _barriers(program)
    errors: list[BaseException] = []

    def worker(scripts: list[TxnScript]) -> None:
        try:
            engine.driver.execute(thread_steps(engine, scripts, outcome, barriers))
        except BaseException as exc:  # reported to the caller
            errors.append(exc)

    workers = [threading.Thread(target=worker, args=(s,), daemon=True) for _, s in sorted(program.threads().items())]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    if errors:
        raise errors[0]
    return outcome



def explore_program(
    make_engine: Callable[[Iterable[str]], VersionedEngine],
    program: ProgramModel,
    visit: Callable[[VersionedEngine, RunOutcome, Scheduler], None],
    prune: bool = True,
    limit: int | None = None,
) -> int:
    """Run ``program`` under every interleaving of its threads and tasks.

    ``make_engine`` builds a fresh engine from the variable names.  With
    ``prune`` a node is skipped when the engine state, the number of steps
    each actor took and everything read so far match a node already
    expanded.  Returns the number of complete runs visited.
    """

    def build() -> Scheduler:
        engine = make_engine(program.variables)
        sched, outcome = build_scheduled(engine, program)
        sched.context = (engine, outcome)
        return sched

    def state_key(sched: Scheduler) -> tuple:
        engine, outcome = sched.context
        reads = tuple((t, o.status, tuple(o.reads)) for t, o in sorted(outcome.txns.items()))
        steps = Counter(c for c in sched.choices if not c.startswith("task:"))
        return engine_state(engine), tuple(sorted(steps.items())), reads

    return explore(build, lambda s: visit(*s.context, s), state_key if prune else None, limit)
