"""Events, traces, histories and their file format.

A trace is the totally ordered log produced by an engine run.  It holds
transactional API events (invocations and responses), memory events
(views, routine updates, recovery updates), counter markers used for
timing (``release`` when lv moves, ``terminate`` when ltv moves) and the
declared read/write bounds of every transaction (``rub``/``wub``).

The history of a trace keeps only the API events.
"""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, TextIO


class Kind(str, Enum):
    INV_START = "inv_start"
    RESP_START = "resp_start"
    INV_READ = "inv_read"
    RESP_READ = "resp_read"
    INV_WRITE = "inv_write"
    RESP_WRITE = "resp_write"
    INV_TRYC = "inv_tryc"
    RESP_TRYC = "resp_tryc"
    INV_TRYA = "inv_trya"
    RESP_TRYA = "resp_trya"
    VIEW = "view"
    UPDATE = "update"
    RECOVERY = "recovery"
    RELEASE = "release"
    TERMINATE = "terminate"
    RUB = "rub"
    WUB = "wub"


INVOCATIONS = frozenset({Kind.INV_START, Kind.INV_READ, Kind.INV_WRITE, Kind.INV_TRYC, Kind.INV_TRYA})
RESPONSES = frozenset({Kind.RESP_START, Kind.RESP_READ, Kind.RESP_WRITE, Kind.RESP_TRYC, Kind.RESP_TRYA})
API_KINDS = INVOCATIONS | RESPONSES
MEMORY_KINDS = frozenset({Kind.VIEW, Kind.UPDATE, Kind.RECOVERY})
MATCHING = {
    Kind.INV_START: Kind.RESP_START,
    Kind.INV_READ: Kind.RESP_READ,
    Kind.INV_WRITE: Kind.RESP_WRITE,
    Kind.INV_TRYC: Kind.RESP_TRYC,
    Kind.INV_TRYA: Kind.RESP_TRYA,
}

OK = "ok"
ABORTED = "aborted"
COMMITTED = "committed"

_FIELDS = ("seq", "txn", "kind", "var", "value", "outcome")


@dataclass(frozen=True)
class Event:
    seq: int
    txn: int
    kind: Kind
    var: str | None = None
    value: int | None = None
    outcome: str | None = None

    @property
    def is_api(self) -> bool:
        return self.kind in API_KINDS

    @property
    def is_memory(self) -> bool:
        return self.kind in MEMORY_KINDS

    @property
    def aborted(self) -> bool:
        return self.outcome == ABORTED

    def to_json(self) -> str:
        obj: dict[str, Any] = {}
        for name in _FIELDS:
            val = getattr(self, name)
            if val is None:
                continue
            obj[name] = val.value if isinstance(val, Kind) else val
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> Event:
        obj = json.loads(line)
        unknown = set(obj) - set(_FIELDS)
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)} in {line!r}")
        return cls(
            seq=int(obj["seq"]),
            txn=int(obj["txn"]),
            kind=Kind(obj["kind"]),
            var=obj.get("var"),
            value=obj.get("value"),
            outcome=obj.get("outcome"),
        )

    def __str__(self) -> str:
        parts = [f"#{self.seq}", f"T{self.txn}", self.kind.value]
        if self.var is not None:
            parts.append(self.var)
        if self.value is not None:
            parts.append(str(self.value))
        if self.outcome is not None:
            parts.append(self.outcome)
        return " ".join(parts)


class TraceSealedError(RuntimeError):
    pass


class TraceRecorder:
    """Thread-safe append-only event log."""

    def __init__(self) -> None:
        self._events: list[Event] = []
        self._lock = threading.Lock()
        self._sealed = False

    def record(
        self,
        txn: int,
        kind: Kind,
        var: str | None = None,
        value: int | None = None,
        outcome: str | None = None,
    ) -> int:
        with self._lock:
            if self._sealed:
                raise TraceSealedError("trace already sealed")
            seq = len(self._events)
            self._events.append(Event(seq, txn, kind, var, value, outcome))
            return seq

    def __len__(self) -> int:
        return len(self._events)

    def seal(self) -> Trace:
        with self._lock:
            self._sealed = True
            return Trace(tuple(self._events))


@dataclass(frozen=True)
class Bounds:
    rub: int = 0
    wub: int = 0


@dataclass(frozen=True)
class Trace:
    events: tuple[Event, ...]
    _by_txn: dict[int, list[Event]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.seq <= prev.seq:
                raise ValueError(f"sequence numbers not increasing at {cur}")
        groups: dict[int, list[Event]] = defaultdict(list)
        for e in self.events:
            groups[e.txn].append(e)
        self._by_txn.update(groups)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def txns(self) -> list[int]:
        return list(self._by_txn)

    def of_txn(self, txn: int) -> list[Event]:
        return list(self._by_txn.get(txn, ()))

    def bounds(self) -> dict[int, dict[str, Bounds]]:
        """Declared bounds per transaction and variable."""
        table: dict[int, dict[str, Bounds]] = defaultdict(dict)
        for e in self.events:
            if e.kind in (Kind.RUB, Kind.WUB):
                old = table[e.txn].get(e.var, Bounds())
                if e.kind is Kind.RUB:
                    table[e.txn][e.var] = Bounds(e.value, old.wub)
                else:
                    table[e.txn][e.var] = Bounds(old.rub, e.value)
        return dict(table)

    def history(self) -> History:
        return History(tuple(e for e in self.events if e.is_api))

    def prefix(self, length: int) -> Trace:
        return Trace(self.events[:length])

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> Trace:
        return cls(tuple(Event.from_json(line) for line in text.splitlines() if line.strip()))

    def dump(self, out: Path | str | TextIO) -> None:
        if isinstance(out, (str, Path)):
            Path(out).write_text(self.to_jsonl())
        else:
            out.write(self.to_jsonl())

    @classmethod
    def load(cls, path: Path | str) -> Trace:
        return cls.from_jsonl(Path(path).read_text())


# ---------------------------------------------------------------------------
# histories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Operation:
    """An invocation with its response (``resp`` is None while pending)."""

    txn: int
    inv: Event
    resp: Event | None

    @property
    def name(self) -> str:
        return self.inv.kind.value[4:]

    @property
    def var(self) -> str | None:
        return self.inv.var

    @property
    def complete(self) -> bool:
        return self.resp is not None

    @property
    def aborted(self) -> bool:
        return self.resp is not None and self.resp.aborted

    @property
    def value(self) -> int | None:
        """Written value for writes, returned value for reads."""
        if self.inv.kind is Kind.INV_WRITE:
            return self.inv.value
        return None if self.resp is None else self.resp.value


class HistoryError(ValueError):
    pass


@dataclass(frozen=True)
class History:
    events: tuple[Event, ...]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def txns(self) -> list[int]:
        return list(dict.fromkeys(e.txn for e in self.events))

    def project_txn(self, txn: int) -> History:
        return History(tuple(e for e in self.events if e.txn == txn))

    def project_var(self, var: str) -> History:
        """Complete operation executions on ``var`` only."""
        keep: list[Event] = []
        for op in self.operations():
            if op.var == var and op.resp is not None:
                keep.extend((op.inv, op.resp))
        keep.sort(key=lambda e: e.seq)
        return History(tuple(keep))

    def prefix(self, length: int) -> History:
        return History(self.events[:length])

    def operations(self, txn: int | None = None) -> list[Operation]:
        ops: list[Operation] = []
        open_inv: dict[int, Event] = {}
        for e in self.events:
            if txn is not None and e.txn != txn:
                continue
            if e.kind in INVOCATIONS:
                if e.txn in open_inv:
                    raise HistoryError(f"T{e.txn} invoked {e.kind.value} with an operation pending")
                open_inv[e.txn] = e
            else:
                inv = open_inv.pop(e.txn, None)
                if inv is None or MATCHING[inv.kind] is not e.kind:
                    raise HistoryError(f"unmatched response {e}")
                ops.append(Operation(e.txn, inv, e))
        ops.extend(Operation(t, inv, None) for t, inv in open_inv.items())
        ops.sort(key=lambda op: op.inv.seq)
        return ops

    def status(self, txn: int) -> str:
        """One of committed, aborted, commit-pending, live."""
        events = [e for e in self.events if e.txn == txn]
        if not events:
            return "absent"
        last = events[-1]
        if last.kind in RESPONSES and last.aborted:
            return "aborted"
        if last.kind is Kind.RESP_TRYC:
            return "committed"
        if last.kind is Kind.INV_TRYC:
            return "commit-pending"
        return "live"

    def completion_time(self, txn: int) -> int | None:
        """Seq of the response that completed ``txn`` (None if not completed)."""
        events = [e for e in self.events if e.txn == txn]
        if events and self.status(txn) in ("committed", "aborted"):
            return events[-1].seq
        return None

    def precedes(self, a: int, b: int) -> bool:
        """Real-time order: ``a`` completed before ``b``'s first event."""
        done = self.completion_time(a)
        first_b = next((e.seq for e in self.events if e.txn == b), None)
        return done is not None and first_b is not None and done < first_b


def well_formed(h: History) -> bool:
    """Per-transaction alternation, start first, nothing after completion."""
    for txn in h.txns:
        sub = h.project_txn(txn).events
        if not sub or sub[0].kind is not Kind.INV_START:
            return False
        expect_inv = True
        pending: Event | None = None
        for i, e in enumerate(sub):
            if expect_inv:
                if e.kind not in INVOCATIONS or (i > 0 and e.kind is Kind.INV_START):
                    return False
                pending = e
            else:
                assert pending is not None
                if e.kind is not MATCHING[pending.kind]:
                    return False
                finished = e.aborted or e.kind is Kind.RESP_TRYC
                if e.kind is Kind.RESP_TRYA and not e.aborted:
                    return False
                if finished and i != len(sub) - 1:
                    return False
            expect_inv = not expect_inv
    return True


def unique_writes(h: History) -> bool:
    """Successfully written values are pairwise distinct and never 0."""
    seen: set[Any] = set()
    for op in h.operations():
        if op.inv.kind is Kind.INV_WRITE and op.resp is not None and not op.aborted:
            v = op.inv.value
            if v == 0 or v in seen:
                return False
            seen.add(v)
    return True


@dataclass
class Timing:
    exec_time: int
    release_time: dict[tuple[int, str], int]
    completion_time: dict[tuple[int, str], int]


def timing(tr: Trace) -> Timing:
    """Release/completion seq per (txn, var) and overall execution time."""
    release: dict[tuple[int, str], int] = {}
    complete: dict[tuple[int, str], int] = {}
    for e in tr:
        if e.kind is Kind.RELEASE:
            release[(e.txn, e.var)] = e.seq
        elif e.kind is Kind.TERMINATE:
            complete[(e.txn, e.var)] = e.seq
    return Timing(max((e.seq for e in tr), default=0), release, complete)


def read_trace_lines(lines: Iterable[str]) -> Trace:
    return Trace(tuple(Event.from_json(line) for line in lines if line.strip()))
