"""Versioned pessimistic transactional memory: the OptSVA engine.

Every shared variable carries four counters.  ``gv`` hands out private
versions at start.  ``lv`` names the version holder that last let go of the
variable; a transaction may touch memory once ``lv == pv - 1`` (the access
condition).  ``ltv`` names the last version holder to finish; a transaction
may commit or abort once ``ltv == pv - 1`` (the termination condition).
``cv`` is the version whose state is currently trusted; when a transaction
aborts and rolls a variable back, ``cv`` drops to the version it restored
and every version between the two is marked invalid, so anyone who read
one of them knows it must abort.

OptSVA adds to that base:

* read-only variables are copied into a buffer by a background task as soon
  as the access condition holds, then released right away;
* writes only fill a buffer; the memory update is done by a background task
  once the closing write (``wc == wub``) happened, or at commit otherwise;
* variables are released as soon as their last use is known.

Operations are generators (see :mod:`optsva.async_engine`); the blocking
methods run them through a :class:`~optsva.async_engine.ThreadedDriver`.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .async_engine import (
    PREEMPT,
    Steps,
    Task,
    TaskRegistry,
    ThreadedDriver,
    Wait,
    WakeCondition,
    join,
)
from .trace_model import ABORTED, COMMITTED, OK, Kind, TraceRecorder


class TxnAborted(Exception):
    """The transaction was aborted; the operation did not take effect."""

    def __init__(self, txn: int, forced: bool = True) -> None:
        super().__init__(f"T{txn} aborted")
        self.txn = txn
        self.forced = forced


class TxnUsageError(Exception):
    """Programming error in the use of a transaction."""


class BoundViolation(TxnUsageError):
    pass


class AccessSetViolation(TxnUsageError):
    pass


class TxnStateError(TxnUsageError):
    pass


class ConfigurationError(ValueError):
    pass


class TxnStatus(str, Enum):
    ACTIVE = "active"
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass(eq=False)
class VariableCell:
    name: str
    value: int = 0
    gv: int = 0
    lv: int = 0
    ltv: int = 0
    cv: int = 0
    invalid: set[int] = field(default_factory=set, repr=False)
    owners: dict[int, TxnHandle] = field(default_factory=dict, repr=False)


@dataclass(frozen=True)
class TxnDescriptor:
    """Declared access set: ``(variable, rub, wub)`` per variable."""

    aset: tuple[tuple[str, int, int], ...]

    def __post_init__(self) -> None:
        names = [v for v, _, _ in self.aset]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"variable declared twice in {names}")
        for var, rub, wub in self.aset:
            if rub < 0 or wub < 0:
                raise ConfigurationError(f"negative bound for {var}")

    @classmethod
    def of(cls, bounds: Mapping[str, tuple[int, int]]) -> TxnDescriptor:
        return cls(tuple((v, r, w) for v, (r, w) in sorted(bounds.items())))

    @property
    def variables(self) -> list[str]:
        return sorted(v for v, _, _ in self.aset)


@dataclass(eq=False)
class TxnHandle:
    id: int
    desc: TxnDescriptor
    status: TxnStatus = TxnStatus.ACTIVE
    pv: dict[str, int] = field(default_factory=dict)
    rv: dict[str, int] = field(default_factory=dict)
    rc: dict[str, int] = field(default_factory=dict)
    wc: dict[str, int] = field(default_factory=dict)
    rub: dict[str, int] = field(default_factory=dict)
    wub: dict[str, int] = field(default_factory=dict)
    buf: dict[str, int] = field(default_factory=dict)
    st: dict[str, int] = field(default_factory=dict)
    viewed: set[str] = field(default_factory=set)
    updated: set[str] = field(default_factory=set)
    released: set[str] = field(default_factory=set)
    completed: set[str] = field(default_factory=set)
    tasks: dict[str, list[Task]] = field(default_factory=dict)
    abort_pending: bool = False
    aborting: bool = False

    @property
    def aset(self) -> list[str]:
        return sorted(self.pv)

    def read_only(self, var: str) -> bool:
        return self.rub[var] > 0 and self.wub[var] == 0

    @property
    def active(self) -> bool:
        return self.status is TxnStatus.ACTIVE

    def __repr__(self) -> str:
        return f"TxnHandle(T{self.id}, {self.status.value}, pv={self.pv})"


Clock = Callable[[], int]


class VersionedEngine:
    """Machinery shared by OptSVA and the SVA baseline."""

    def __init__(
        self,
        variables: Iterable[str],
        recorder: TraceRecorder | None = None,
        clock: Clock | None = None,
        watchdog: float = 30.0,
    ) -> None:
        self.cells: dict[str, VariableCell] = {v: VariableCell(v) for v in variables}
        self.recorder = recorder
        self.clock = clock
        self.tasks = TaskRegistry()
        self.driver = ThreadedDriver(self.tasks, watchdog)
        self.handles: dict[int, TxnHandle] = {}
        self.release_times: dict[tuple[int, str], int] = {}
        self.completion_times: dict[tuple[int, str], int] = {}
        self._ids = itertools.count(1)

    # -- blocking API -------------------------------------------------------

    def start(self, desc: TxnDescriptor, txn_id: int | None = None) -> TxnHandle:
        return self.driver.execute(self.start_steps(desc, txn_id))

    def read(self, t: TxnHandle, var: str) -> int:
        return self.driver.execute(self.read_steps(t, var))

    def write(self, t: TxnHandle, var: str, value: int) -> None:
        return self.driver.execute(self.write_steps(t, var, value))

    def commit(self, t: TxnHandle) -> None:
        return self.driver.execute(self.commit_steps(t))

    def abort(self, t: TxnHandle) -> None:
        return self.driver.execute(self.abort_steps(t))

    # -- shared steps -------------------------------------------------------

    def _record(self, t: TxnHandle, kind: Kind, var: str | None = None, value: int | None = None,
                outcome: str | None = None) -> None:
        if self.recorder is not None:
            self.recorder.record(t.id, kind, var, value, outcome)

    def _now(self) -> int:
        if self.clock is not None:
            return self.clock()
        return len(self.recorder) if self.recorder is not None else 0

    def start_steps(self, desc: TxnDescriptor, txn_id: int | None = None) -> Steps[TxnHandle]:
        yield PREEMPT
        unknown = [v for v, _, _ in desc.aset if v not in self.cells]
        if unknown:
            raise ConfigurationError(f"unknown variables {unknown}")
        if txn_id is None:
            txn_id = next(self._ids)
            while txn_id in self.handles:
                txn_id = next(self._ids)
        elif txn_id in self.handles:
            raise ConfigurationError(f"transaction id {txn_id} already used")
        t = TxnHandle(txn_id, desc)
        self.handles[t.id] = t
        self._record(t, Kind.INV_START)
        for var, rub, wub in sorted(desc.aset):
            cell = self.cells[var]
            cell.gv += 1
            t.pv[var] = cell.gv
            cell.owners[cell.gv] = t
            t.rub[var], t.wub[var] = rub, wub
            t.rc[var] = t.wc[var] = 0
            self._record(t, Kind.RUB, var, rub)
            self._record(t, Kind.WUB, var, wub)
        self._on_start(t)
        self._record(t, Kind.RESP_START, outcome=OK)
        return t

    def _on_start(self, t: TxnHandle) -> None:
        pass

    def _access(self, t: TxnHandle, var: str) -> WakeCondition:
        cell = self.cells[var]
        return WakeCondition(cell, "lv", t.pv[var] - 1)

    def _termination(self, t: TxnHandle, var: str) -> WakeCondition:
        cell = self.cells[var]
        return WakeCondition(cell, "ltv", t.pv[var] - 1)

    def _wait(self, cond: WakeCondition, t: TxnHandle) -> Steps[None]:
        if not cond.holds():
            yield Wait(cond.holds, f"T{t.id} {cond}")

    def _checkpoint(self, t: TxnHandle, var: str) -> int:
        assert var not in t.viewed, f"second view of {var} by T{t.id}"
        cell = self.cells[var]
        assert cell.lv == t.pv[var] - 1, f"T{t.id} views {var} without access"
        self._record(t, Kind.VIEW, var, cell.value)
        t.viewed.add(var)
        t.st[var] = cell.value
        t.rv[var] = cell.cv
        return cell.value

    def _update(self, t: TxnHandle, var: str, value: int) -> None:
        assert var not in t.updated, f"second update of {var} by T{t.id}"
        cell = self.cells[var]
        assert cell.lv == t.pv[var] - 1, f"T{t.id} updates {var} without access"
        cell.value = value
        t.updated.add(var)
        self._record(t, Kind.UPDATE, var, value)

    def _release(self, t: TxnHandle, var: str, trusted: bool = True) -> None:
        assert var not in t.released, f"double release of {var} by T{t.id}"
        cell = self.cells[var]
        assert cell.lv == t.pv[var] - 1
        if trusted:
            cell.cv = t.pv[var]
        cell.lv = t.pv[var]
        t.released.add(var)
        self.release_times[(t.id, var)] = self._now()
        self._record(t, Kind.RELEASE, var)

    def _complete(self, t: TxnHandle, var: str) -> None:
        assert var not in t.completed
        cell = self.cells[var]
        assert cell.ltv == t.pv[var] - 1
        cell.ltv = t.pv[var]
        t.completed.add(var)
        self.completion_times[(t.id, var)] = self._now()
        self._record(t, Kind.TERMINATE, var)

    # -- consistency --------------------------------------------------------

    def consistent(self, t: TxnHandle, fresh: str | None = None) -> bool:
        """Nothing ``t`` has seen has been invalidated.

        A variable seen at recovery version ``rv`` is invalid once a
        rollback covered ``rv``.  On top of that the version ``t`` saw must
        not come from a live transaction that is itself invalid, checked
        transitively, so that a transaction never combines a value that
        depends on a rolled-back write with one read after the rollback.
        ``fresh`` names a variable about to be viewed for the first time;
        the version currently trusted for it is checked the same way.
        """
        memo: dict[int, bool] = {}

        def txn_ok(h: TxnHandle) -> bool:
            if h.status is TxnStatus.COMMITTED:
                return True
            if h.id in memo:
                return memo[h.id]
            memo[h.id] = True
            ok = all(var_ok(h, y) for y in list(h.rv))
            memo[h.id] = ok
            return ok

        def var_ok(h: TxnHandle, var: str) -> bool:
            return version_ok(var, h.rv[var])

        def version_ok(var: str, version: int) -> bool:
            if version in self.cells[var].invalid:
                return False
            if version == 0:
                return True
            supplier = self.cells[var].owners[version]
            if supplier.status is TxnStatus.COMMITTED:
                return True
            if supplier.status is TxnStatus.ABORTED:
                # an aborted supplier only passed on what it saw itself
                if var in supplier.updated:
                    return False
                return var not in supplier.rv or version_ok(var, supplier.rv[var])
            return txn_ok(supplier)

        if not all(var_ok(t, y) for y in list(t.rv)):
            return False
        if fresh is not None and fresh not in t.rv:
            return version_ok(fresh, self.cells[fresh].cv)
        return True

    # -- abort --------------------------------------------------------------

    def abort_steps(self, t: TxnHandle) -> Steps[None]:
        yield PREEMPT
        self._require_active(t)
        self._record(t, Kind.INV_TRYA)
        yield from self._abort(t)
        self._record(t, Kind.RESP_TRYA, outcome=ABORTED)

    def _abort(self, t: TxnHandle) -> Steps[None]:
        """Roll back and let go of every variable.

        Waits for access to every variable still held, then for every
        predecessor to finish; only then restores, releases and
        terminates everything in one step, so no successor observes the
        variables before the abort is over.
        """
        t.aborting = True
        for tasks in t.tasks.values():
            for task in tasks:
                task.cancel()
        for var in t.aset:
            if var not in t.released:
                yield from self._wait(self._access(t, var), t)
        for var in t.aset:
            if var not in t.completed:
                yield from self._wait(self._termination(t, var), t)
        for var in t.aset:
            cell = self.cells[var]
            # skipped when a predecessor's rollback already wiped the update
            if var in t.updated and t.pv[var] not in cell.invalid:
                cell.value = t.st[var]
                cell.invalid.update(range(t.rv[var] + 1, max(cell.cv, t.pv[var]) + 1))
                cell.cv = t.rv[var]
                self._record(t, Kind.RECOVERY, var, t.st[var])
            if var not in t.released:
                self._release(t, var, trusted=False)
            if var not in t.completed:
                self._complete(t, var)
        t.status = TxnStatus.ABORTED

    def _forced_abort(self, t: TxnHandle, resp: Kind, var: str | None = None) -> Steps[None]:
        yield from self._abort(t)
        self._record(t, resp, var, outcome=ABORTED)
        raise TxnAborted(t.id)

    # -- argument checks ----------------------------------------------------

    def _require_active(self, t: TxnHandle) -> None:
        if t.status is not TxnStatus.ACTIVE or t.aborting:
            raise TxnStateError(f"T{t.id} is {t.status.value}")

    def _require_var(self, t: TxnHandle, var: str) -> None:
        if var not in t.pv:
            raise AccessSetViolation(f"T{t.id} did not declare {var}")


class OptSvaEngine(VersionedEngine):
    """OptSVA: buffered reads for read-only variables, deferred writes,
    release at the last use of each variable."""

    name = "optsva"

    def _on_start(self, t: TxnHandle) -> None:
        for var in t.aset:
            if t.read_only(var):
                self._spawn(t, var, "read_buffer", self._access(t, var), lambda var=var: self._read_buffer(t, var))

    def _spawn(self, t: TxnHandle, var: str, what: str, cond: WakeCondition, body: Callable[[], bool | None]) -> Task:
        task = self.tasks.spawn_when(f"{what}:T{t.id}:{var}", cond, body)
        t.tasks.setdefault(what, []).append(task)
        return task

    def _task(self, t: TxnHandle, what: str, var: str) -> Task | None:
        for task in t.tasks.get(what, ()):
            if task.key.endswith(f":{var}"):
                return task
        return None

    # background bodies

    def _read_buffer(self, t: TxnHandle, var: str) -> bool:
        if t.aborting or not t.active:
            return True
        if not self.consistent(t, var):
            t.abort_pending = True
            return False
        t.buf[var] = self._checkpoint(t, var)
        self._release(t, var)
        self._spawn(t, var, "read_commit", self._termination(t, var), lambda: self._read_commit(t, var))
        return True

    def _read_commit(self, t: TxnHandle, var: str) -> bool:
        if t.aborting or not t.active:
            return True
        if t.rv[var] in self.cells[var].invalid:
            t.abort_pending = True
            return False
        self._complete(t, var)
        return True

    def _write_buffer(self, t: TxnHandle, var: str) -> bool:
        if t.aborting or not t.active:
            return True
        if not self.consistent(t, var):
            t.abort_pending = True
            return False
        if var not in t.viewed:
            self._checkpoint(t, var)
        self._update(t, var, t.buf[var])
        self._release(t, var)
        return True

    # API steps

    def read_steps(self, t: TxnHandle, var: str) -> Steps[int]:
        yield PREEMPT
        self._require_active(t)
        self._require_var(t, var)
        if t.rc[var] >= t.rub[var]:
            raise BoundViolation(f"T{t.id} exceeds rub({var})={t.rub[var]}")
        self._record(t, Kind.INV_READ, var)
        if t.abort_pending:
            yield from self._forced_abort(t, Kind.RESP_READ, var)
        if t.read_only(var):
            task = self._task(t, "read_buffer", var)
            assert task is not None
            yield from join(task)
            if t.abort_pending:
                yield from self._forced_abort(t, Kind.RESP_READ, var)
        elif t.wc[var] == 0:
            yield from self._wait(self._access(t, var), t)
            if not self.consistent(t, var):
                yield from self._forced_abort(t, Kind.RESP_READ, var)
            if var not in t.viewed:
                t.buf[var] = self._checkpoint(t, var)
        value = t.buf[var]
        t.rc[var] += 1
        self._record(t, Kind.RESP_READ, var, value, OK)
        return value

    def write_steps(self, t: TxnHandle, var: str, value: int) -> Steps[None]:
        yield PREEMPT
        self._require_active(t)
        self._require_var(t, var)
        if t.wc[var] >= t.wub[var]:
            raise BoundViolation(f"T{t.id} exceeds wub({var})={t.wub[var]}")
        self._record(t, Kind.INV_WRITE, var, value)
        if t.abort_pending or value == 0:
            yield from self._forced_abort(t, Kind.RESP_WRITE, var)
        t.buf[var] = value
        t.wc[var] += 1
        if t.wc[var] == t.wub[var]:
            self._spawn(t, var, "write_buffer", self._access(t, var), lambda: self._write_buffer(t, var))
        self._record(t, Kind.RESP_WRITE, var, outcome=OK)

    def commit_steps(self, t: TxnHandle) -> Steps[None]:
        yield PREEMPT
        self._require_active(t)
        self._record(t, Kind.INV_TRYC)
        if t.abort_pending:
            yield from self._forced_abort(t, Kind.RESP_TRYC)
        for what in ("write_buffer", "read_buffer"):
            for task in list(t.tasks.get(what, ())):
                yield from join(task)
        if t.abort_pending:
            yield from self._forced_abort(t, Kind.RESP_TRYC)
        for var in t.aset:
            if not t.read_only(var):
                yield from self._wait(self._termination(t, var), t)
        for task in list(t.tasks.get("read_commit", ())):
            yield from join(task)
        if t.abort_pending or not self.consistent(t):
            yield from self._forced_abort(t, Kind.RESP_TRYC)
        # every predecessor is done, so nothing below can block
        for var in t.aset:
            if 0 < t.wc[var] < t.wub[var]:
                self._catch_up(t, var)
        for var in t.aset:
            if t.read_only(var):
                continue
            if var not in t.released:
                self._release(t, var)
            self._complete(t, var)
        t.status = TxnStatus.COMMITTED
        self._record(t, Kind.RESP_TRYC, outcome=COMMITTED)

    def _catch_up(self, t: TxnHandle, var: str) -> None:
        assert self._access(t, var).holds()
        if var not in t.viewed:
            self._checkpoint(t, var)
        self._update(t, var, t.buf[var])


def engine_state(engine: VersionedEngine) -> tuple[Any, ...]:
    """Hashable snapshot of memory, counters and transaction bookkeeping."""
    cells = tuple((c.name, c.value, c.gv, c.lv, c.ltv, c.cv, tuple(sorted(c.invalid))) for c in engine.cells.values())
    txns = tuple(
        (
            t.id,
            t.status.value,
            tuple(sorted(t.pv.items())),
            tuple(sorted(t.rv.items())),
            tuple(sorted(t.rc.items())),
            tuple(sorted(t.wc.items())),
            tuple(sorted(t.buf.items())),
            tuple(sorted(t.st.items())),
            tuple(sorted(t.released)),
            tuple(sorted(t.completed)),
            t.abort_pending,
            t.aborting,
            tuple(sorted((task.key, task.state.value) for ts in t.tasks.values() for task in ts)),
        )
        for t in engine.handles.values()
    )
    return cells, txns
