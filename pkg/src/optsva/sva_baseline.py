"""The SVA baseline: same version counters, no operation-specific tricks.

Every access waits for the access condition, reads and writes are treated
alike, and a variable is released only after its last declared access
(``rub + wub`` accesses in total) or at commit.

Memory is accessed in place while the transaction holds the variable.  The
first access takes the checkpoint; the new value of a written variable is
stored once, right before the variable is released.  Since nobody else can
touch the variable in between, this is indistinguishable from writing at
every access, and it keeps one update event per variable.
"""

from __future__ import annotations

from .async_engine import PREEMPT, Steps
from .tm_core import BoundViolation, TxnHandle, TxnStatus, VersionedEngine
from .trace_model import COMMITTED, OK, Kind


class SvaEngine(VersionedEngine):
    name = "sva"

    @staticmethod
    def supremum(t: TxnHandle, var: str) -> int:
        return t.rub[var] + t.wub[var]

    @staticmethod
    def accesses(t: TxnHandle, var: str) -> int:
        return t.rc[var] + t.wc[var]

    def read_steps(self, t: TxnHandle, var: str) -> Steps[int]:
        return self._access_steps(t, var, None)

    def write_steps(self, t: TxnHandle, var: str, value: int) -> Steps[None]:
        yield from self._access_steps(t, var, value)

    def _access_steps(self, t: TxnHandle, var: str, value: int | None) -> Steps[int]:
        yield PREEMPT
        self._require_active(t)
        self._require_var(t, var)
        if self.accesses(t, var) >= self.supremum(t, var):
            raise BoundViolation(f"T{t.id} exceeds sup({var})={self.supremum(t, var)}")
        is_write = value is not None
        resp = Kind.RESP_WRITE if is_write else Kind.RESP_READ
        self._record(t, Kind.INV_WRITE if is_write else Kind.INV_READ, var, value)
        if value == 0:
            yield from self._forced_abort(t, resp, var)
        yield from self._wait(self._access(t, var), t)
        if not self.consistent(t, var):
            yield from self._forced_abort(t, resp, var)
        if var not in t.viewed:
            t.buf[var] = self._checkpoint(t, var)
        if is_write:
            t.buf[var] = value
            t.wc[var] += 1
        else:
            t.rc[var] += 1
        result = t.buf[var]
        if self.accesses(t, var) == self.supremum(t, var):
            if t.wc[var] > 0:
                self._update(t, var, t.buf[var])
            self._release(t, var)
        if is_write:
            self._record(t, resp, var, outcome=OK)
        else:
            self._record(t, resp, var, result, OK)
        return result

    def commit_steps(self, t: TxnHandle) -> Steps[None]:
        yield PREEMPT
        self._require_active(t)
        self._record(t, Kind.INV_TRYC)
        for var in t.aset:
            yield from self._wait(self._termination(t, var), t)
        if not self.consistent(t):
            yield from self._forced_abort(t, Kind.RESP_TRYC)
        for var in t.aset:
            if var not in t.released:
                if t.wc[var] > 0:
                    self._update(t, var, t.buf[var])
                self._release(t, var)
            self._complete(t, var)
        t.status = TxnStatus.COMMITTED
        self._record(t, Kind.RESP_TRYC, outcome=COMMITTED)
