"""Brute-force last-use opacity for small histories.

A history is final-state last-use opaque when some sequential ordering of
one of its completions respects real time and every transaction is legal
in what it is allowed to see: committed transactions see the committed
transactions ordered before them, other transactions may additionally see
the *decided* part of non-committed transactions that are ordered before
them but did not finish before they started.  A transaction is decided on a
variable once it completed the write that exhausts its declared write
bound there (its closing write).  Last-use opacity asks for this on every
prefix of the history.

The checker first tries the ordering suggested by the trace (real time,
then isolation order, then memory accesses before buffered writes) and
falls back to enumerating every real-time-respecting ordering of every
completion.
"""

from __future__ import annotations

import itertools
import json
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Union

from .program import ProgramModel
from .trace_model import Bounds, History, Kind, Operation, Trace

DEFAULT_MAX_TXNS = 5

BoundsTable = Mapping[int, Mapping[str, Union[Bounds, tuple[int, int]]]]


class LuBoundExceeded(Exception):
    """The history has more transactions than the checker will enumerate."""


class ConstructionInapplicable(Exception):
    """The ordering rules derived from the trace are cyclic."""


def _wub(entry: Bounds | tuple[int, int]) -> int:
    return entry.wub if isinstance(entry, Bounds) else int(entry[1])


def program_bounds(program: ProgramModel) -> dict[int, dict[str, Bounds]]:
    return {s.txn: {v: Bounds(r, w) for v, r, w in s.descriptor().aset} for s in program.txns}


def closing_writes(history: History, bounds: BoundsTable) -> dict[tuple[int, str], Operation]:
    """The complete, successful write that reaches the declared write bound.

    Raises ``ValueError`` if a transaction writes more often than declared.
    """
    counts: dict[tuple[int, str], int] = defaultdict(int)
    out: dict[tuple[int, str], Operation] = {}
    for op in history.operations():
        if op.inv.kind is not Kind.INV_WRITE or not op.complete or op.aborted:
            continue
        key = (op.txn, op.var)
        counts[key] += 1
        declared = bounds.get(op.txn, {}).get(op.var)
        if declared is None:
            raise ValueError(f"no declared bounds for T{op.txn} on {op.var}")
        wub = _wub(declared)
        if counts[key] > wub:
            raise ValueError(f"T{op.txn} wrote {op.var} {counts[key]} times, bound is {wub}")
        if counts[key] == wub:
            out[key] = op
    return out


# ---------------------------------------------------------------------------
# histories reduced to what legality needs
# ---------------------------------------------------------------------------

# (kind, var, value) with kind in {"read", "write"}; only successful ops
Effect = tuple[str, str, int]


@dataclass
class HistoryModel:
    txns: list[int]
    effects: dict[int, list[Effect]]
    decided: dict[int, set[str]]
    first_seq: dict[int, int]
    done_seq: dict[int, int]
    status: dict[int, str]  # committed, aborted, commit-pending, live

    def precedes(self, a: int, b: int) -> bool:
        return a in self.done_seq and self.done_seq[a] < self.first_seq[b]


def history_model(history: History, bounds: BoundsTable) -> HistoryModel:
    txns = history.txns
    effects: dict[int, list[Effect]] = {t: [] for t in txns}
    for op in history.operations():
        if not op.complete or op.aborted:
            continue
        if op.inv.kind is Kind.INV_WRITE:
            effects[op.txn].append(("write", op.var, op.inv.value))
        elif op.inv.kind is Kind.INV_READ:
            effects[op.txn].append(("read", op.var, op.resp.value))
    decided: dict[int, set[str]] = {t: set() for t in txns}
    for (t, var) in closing_writes(history, bounds):
        decided[t].add(var)
    first_seq: dict[int, int] = {}
    for e in history:
        first_seq.setdefault(e.txn, e.seq)
    done_seq = {t: history.completion_time(t) for t in txns}
    return HistoryModel(
        txns,
        effects,
        decided,
        first_seq,
        {t: s for t, s in done_seq.items() if s is not None},
        {t: history.status(t) for t in txns},
    )


def legal(ops: Iterable[Effect]) -> bool:
    """Every read returns the latest preceding write, or 0 if there is none."""
    memory: dict[str, int] = {}
    for kind, var, value in ops:
        if kind == "write":
            if value == 0:
                return False
            memory[var] = value
        elif memory.get(var, 0) != value:
            return False
    return True


def _decided_part(model: HistoryModel, txn: int) -> list[Effect]:
    return [e for e in model.effects[txn] if e[1] in model.decided[txn]]


def eligible_suppliers(model: HistoryModel, order: Sequence[int], committed: set[int], txn: int) -> list[int]:
    """Non-committed transactions whose decided part ``txn`` may see.

    They must be decided, ordered before ``txn`` and must not have
    finished before ``txn`` started.  Committed transactions see none.
    """
    if txn in committed:
        return []
    pos = list(order).index(txn)
    return [
        other for other in order[:pos]
        if other not in committed and model.decided[other] and not model.precedes(other, txn)
    ]


def luvis(
    model: HistoryModel,
    order: Sequence[int],
    committed: set[int],
    txn: int,
    include: Iterable[int] | None = None,
) -> list[Effect]:
    """Committed transactions before ``txn``, the decided part of the
    suppliers in ``include`` (default: every eligible one), then ``txn``."""
    allowed = set(eligible_suppliers(model, order, committed, txn))
    chosen = allowed if include is None else set(include)
    if not chosen <= allowed:
        raise ValueError(f"T{txn} may not see {sorted(chosen - allowed)}")
    pos = list(order).index(txn)
    seen: list[Effect] = []
    for other in order[:pos]:
        if other in committed:
            seen.extend(model.effects[other])
        elif other in chosen:
            seen.extend(_decided_part(model, other))
    seen.extend(model.effects[txn])
    return seen


def vis(model: HistoryModel, order: Sequence[int], committed: set[int], txn: int) -> list[Effect]:
    """Committed transactions before ``txn`` in ``order``, then ``txn``."""
    pos = list(order).index(txn)
    seen = [e for other in order[:pos] if other in committed for e in model.effects[other]]
    return seen + model.effects[txn]


def last_use_legal(model: HistoryModel, order: Sequence[int], committed: set[int], txn: int) -> bool:
    """Legal for some choice of visible decided suppliers.

    Seeing a decided supplier is a permission, not an obligation: a
    transaction may have read the supplier's early-released value, or it
    may have read the state before the supplier touched the variable.
    """
    if txn in committed:
        return legal(vis(model, order, committed, txn))
    allowed = eligible_suppliers(model, order, committed, txn)
    for size in range(len(allowed), -1, -1):
        for chosen in itertools.combinations(allowed, size):
            if legal(luvis(model, order, committed, txn, chosen)):
                return True
    return False


def _completions(model: HistoryModel) -> list[set[int]]:
    """Committed sets of every completion: commit-pending may go either way."""
    base = {t for t in model.txns if model.status[t] == "committed"}
    pending = [t for t in model.txns if model.status[t] == "commit-pending"]
    out = []
    for picks in itertools.product((True, False), repeat=len(pending)):
        out.append(base | {t for t, keep in zip(pending, picks) if keep})
    return out


def _order_legal(model: HistoryModel, order: Sequence[int], committed: set[int]) -> int | None:
    """Index of the first illegal transaction, or None."""
    for pos in range(len(order)):
        if not last_use_legal(model, order[: pos + 1], committed, order[pos]):
            return pos
    return None


def _search(model: HistoryModel, committed: set[int]) -> list[int] | None:
    """Depth-first search over real-time-respecting orders, pruning early."""
    txns = model.txns
    preds = {t: {o for o in txns if o != t and model.precedes(o, t)} for t in txns}
    order: list[int] = []
    placed: set[int] = set()

    def extend() -> bool:
        if len(order) == len(txns):
            return True
        for t in txns:
            if t in placed or not preds[t] <= placed:
                continue
            order.append(t)
            if last_use_legal(model, order, committed, t):
                placed.add(t)
                if extend():
                    return True
                placed.discard(t)
            order.pop()
        return False

    return list(order) if extend() else None


# ---------------------------------------------------------------------------
# construction from the trace
# ---------------------------------------------------------------------------


def build_seq(history: History, trace: Trace) -> list[int]:
    """Transaction order suggested by the trace.

    Pairs are ordered by real time; pairs not ordered in real time by the
    isolation order; remaining pairs put a transaction that accessed a
    variable's memory before one that only wrote it into its buffer.
    Raises :class:`ConstructionInapplicable` if the constraints are cyclic.
    """
    from .harmony_checker import TraceIndex, isolation_order

    idx = TraceIndex(trace)
    iso = isolation_order(idx)
    txns = history.txns
    first: dict[int, int] = {}
    for e in history:
        first.setdefault(e.txn, e.seq)
    done = {t: history.completion_time(t) for t in txns}

    def rt(a: int, b: int) -> bool:
        return done[a] is not None and done[a] < first[b]

    def by_memory(a: int, b: int) -> bool:
        return any(idx.writes.get((b, x)) for x in idx.eset[a])

    edges: set[tuple[int, int]] = set()
    for a, b in itertools.combinations(txns, 2):
        for rule in (rt, iso.before, by_memory):
            fwd, back = rule(a, b), rule(b, a)
            if fwd != back:
                edges.add((a, b) if fwd else (b, a))
                break
            if fwd and back:
                break
    # Kahn's algorithm, ties broken by first event
    indeg = {t: 0 for t in txns}
    for _, b in edges:
        indeg[b] += 1
    ready = sorted((t for t in txns if indeg[t] == 0), key=first.get)
    out: list[int] = []
    while ready:
        t = ready.pop(0)
        out.append(t)
        for a, b in edges:
            if a == t:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
        ready.sort(key=first.get)
    if len(out) != len(txns):
        raise ConstructionInapplicable("ordering constraints are cyclic")
    return out


def lvis_construction(history: History, trace: Trace, order: Sequence[int], txn: int,
                      bounds: BoundsTable | None = None) -> list[Effect]:
    """Visible history of ``txn`` built from the trace's view chains.

    Committed transactions ordered before ``txn`` are visible whole,
    aborted ones that finished before ``txn`` started are not visible, the
    others contribute their decided part when a view chain leads from them
    to ``txn``.
    """
    from .harmony_checker import TraceIndex

    model = history_model(history, bounds if bounds is not None else trace.bounds())
    idx = TraceIndex(trace)
    successors: dict[int, set[int]] = defaultdict(set)
    for (viewer, supplier) in idx.views_pairs(virtual=True):
        successors[supplier].add(viewer)

    def reaches(src: int, dst: int) -> bool:
        stack, seen = [src], {src}
        while stack:
            cur = stack.pop()
            for nxt in successors[cur]:
                if nxt == dst:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    pos = list(order).index(txn)
    seen: list[Effect] = []
    for other in order[:pos]:
        if model.status[other] == "committed":
            seen.extend(model.effects[other])
        elif model.status[other] == "aborted" and model.precedes(other, txn):
            continue
        elif reaches(other, txn):
            seen.extend(_decided_part(model, other))
    seen.extend(model.effects[txn])
    return seen


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


@dataclass
class LuVerdict:
    opaque: bool
    witness: list[int] | None = None
    committed: list[int] = field(default_factory=list)
    prefix_length: int | None = None
    violating_prefix: list[str] | None = None
    reason: str = ""
    used_construction: bool = False

    def to_json(self) -> str:
        out: dict[str, Any] = {"opaque": self.opaque}
        if self.opaque:
            out["witness"] = [f"T{t}" for t in self.witness or []]
            out["committed"] = [f"T{t}" for t in self.committed]
        else:
            out["prefix_length"] = self.prefix_length
            out["violating_prefix"] = self.violating_prefix
            out["reason"] = self.reason
        return json.dumps(out, indent=2)


def _resolve_bounds(bounds: BoundsTable | ProgramModel | None, trace: Trace | None) -> BoundsTable:
    if isinstance(bounds, ProgramModel):
        return program_bounds(bounds)
    if bounds is not None:
        return bounds
    if trace is None:
        raise ValueError("bounds are needed to identify closing writes")
    return trace.bounds()


def check_final_state_lu_opaque(
    history: History,
    bounds: BoundsTable | ProgramModel | None = None,
    trace: Trace | None = None,
    max_txns: int = DEFAULT_MAX_TXNS,
    enumerate_only: bool = False,
) -> LuVerdict:
    table = _resolve_bounds(bounds, trace)
    if len(history.txns) > max_txns:
        raise LuBoundExceeded(f"{len(history.txns)} transactions, bound is {max_txns}")
    model = history_model(history, table)
    if trace is not None and not enumerate_only:
        try:
            order = build_seq(history, trace)
        except ConstructionInapplicable:
            order = None
        if order is not None:
            for committed in _completions(model):
                if _respects_real_time(model, order) and _order_legal(model, order, committed) is None:
                    return LuVerdict(True, order, sorted(committed), used_construction=True)
    for committed in _completions(model):
        order = _search(model, committed)
        if order is not None:
            return LuVerdict(True, order, sorted(committed))
    return LuVerdict(False, reason="no legal sequential ordering of any completion")


def _respects_real_time(model: HistoryModel, order: Sequence[int]) -> bool:
    pos = {t: n for n, t in enumerate(order)}
    return all(pos[a] < pos[b] for a in model.txns for b in model.txns if a != b and model.precedes(a, b))


def check_lu_opaque(
    history: History,
    bounds: BoundsTable | ProgramModel | None = None,
    trace: Trace | None = None,
    max_txns: int = DEFAULT_MAX_TXNS,
    enumerate_only: bool = False,
) -> LuVerdict:
    """Final-state last-use opacity of every prefix of ``history``.

    With ``trace`` given, prefixes of the history are paired with the
    trace prefix ending at the same event.
    """
    table = _resolve_bounds(bounds, trace)
    if len(history.txns) > max_txns:
        raise LuBoundExceeded(f"{len(history.txns)} transactions, bound is {max_txns}")
    last: LuVerdict = LuVerdict(True, [], [])
    for length in range(1, len(history) + 1):
        prefix = history.prefix(length)
        sub_trace = None
        if trace is not None:
            cut = prefix.events[-1].seq
            sub_trace = Trace(tuple(e for e in trace if e.seq <= cut))
        verdict = check_final_state_lu_opaque(prefix, table, sub_trace, max_txns, enumerate_only)
        if not verdict.opaque:
            verdict.prefix_length = length
            verdict.violating_prefix = [str(e) for e in prefix]
            return verdict
        last = verdict
    return last
