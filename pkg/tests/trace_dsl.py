"""Tiny text notation for hand-built traces.

One step per line, ``T<id> <step>``::

    T1 declare x 1 2     rub/wub records
    T1 start
    T1 view x 0
    T1 write x 1
    T1 read x 1          complete read returning 1
    T1 update x 1
    T1 recover x 0
    T1 commit            or: commit aborted / abort
    T1 inv read x        bare invocation (pending operation)

API steps expand to an invocation immediately followed by its response.
"""

from __future__ import annotations

from optsva.trace_model import ABORTED, COMMITTED, OK, Kind, Trace, TraceRecorder


def build(text: str) -> Trace:
    rec = TraceRecorder()
    for raw in text.strip().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        who, step, *args = line.split()
        txn = int(who.lstrip("T"))
        if step == "declare":
            var, rub, wub = args
            rec.record(txn, Kind.RUB, var, int(rub))
            rec.record(txn, Kind.WUB, var, int(wub))
        elif step == "start":
            rec.record(txn, Kind.INV_START)
            rec.record(txn, Kind.RESP_START, outcome=OK)
        elif step == "view":
            rec.record(txn, Kind.VIEW, args[0], int(args[1]))
        elif step == "update":
            rec.record(txn, Kind.UPDATE, args[0], int(args[1]))
        elif step == "recover":
            rec.record(txn, Kind.RECOVERY, args[0], int(args[1]))
        elif step == "write":
            rec.record(txn, Kind.INV_WRITE, args[0], int(args[1]))
            rec.record(txn, Kind.RESP_WRITE, args[0], outcome=OK)
        elif step == "read":
            rec.record(txn, Kind.INV_READ, args[0])
            rec.record(txn, Kind.RESP_READ, args[0], int(args[1]), outcome=OK)
        elif step == "commit":
            rec.record(txn, Kind.INV_TRYC)
            rec.record(txn, Kind.RESP_TRYC, outcome=ABORTED if args == ["aborted"] else COMMITTED)
        elif step == "abort":
            rec.record(txn, Kind.INV_TRYA)
            rec.record(txn, Kind.RESP_TRYA, outcome=ABORTED)
        elif step == "inv":
            kind = {"read": Kind.INV_READ, "commit": Kind.INV_TRYC}[args[0]]
            rec.record(txn, kind, *(args[1:2]))
        else:
            raise ValueError(f"unknown step {step!r}")
    return rec.seal()
