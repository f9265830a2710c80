"""Trace harmony: executable safety rules over recorded traces.

Every rule is a predicate over a sealed trace.  A failed rule yields a
:class:`Violation` naming the rule, the seqs of the offending events and a
short explanation.  :func:`check_harmony` is the conjunction of all rules.

Notation used below: a *view* is a raw memory read (``view`` event), a
*routine update* an ordinary memory write (``update``), a *recovery* the
restorative write performed while aborting (``recovery``).  ``i <x j`` means
that every view/routine update of ``i`` on ``x`` precedes every one of
``j``; the *isolation order* is the transitive closure of the per-pair order
agreed on by all shared variables.
"""

from __future__ import annotations

import bisect
import json
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field

from .trace_model import Event, Kind, Operation, Trace, well_formed

RULES = (
    "minimalism",
    "unique-writes",
    "isolation",
    "view-consonance",
    "routine-update-consonance",
    "recovery-update-consonance",
    "non-local-read-consonance",
    "local-read-consonance",
    "write-consonance",
    "committed-write-obbligato",
    "closing-write-obbligato",
    "view-write-obbligato",
    "decisiveness",
    "abort-accord",
    "commit-accord",
    "coherence",
    "abort-coda",
    "chain-isolation",
    "chain-self-containment",
)

DEFAULT_MAX_CHAIN_NODES = 100_000


class MalformedTraceError(ValueError):
    """The trace is not well-formed; no rule can be evaluated."""


@dataclass(frozen=True)
class Violation:
    rule: str
    seqs: tuple[int, ...]
    explanation: str

    def to_dict(self) -> dict[str, object]:
        return {"rule": self.rule, "seqs": list(self.seqs), "explanation": self.explanation}


@dataclass
class ViolationReport:
    violations: list[Violation] = field(default_factory=list)
    bound_exceeded: bool = False
    chain_nodes: int = 0

    @property
    def harmonious(self) -> bool:
        return not self.violations and not self.bound_exceeded

    def __bool__(self) -> bool:
        # truthy when something is wrong, like a non-empty list
        return not self.harmonious

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def add(self, rule: str, seqs: Iterable[int], explanation: str) -> None:
        self.violations.append(Violation(rule, tuple(sorted(set(seqs))), explanation))

    def merge(self, other: ViolationReport) -> ViolationReport:
        self.violations.extend(other.violations)
        self.bound_exceeded |= other.bound_exceeded
        self.chain_nodes += other.chain_nodes
        return self

    def to_json(self) -> str:
        return json.dumps(
            {
                "harmonious": self.harmonious,
                "bound_exceeded": self.bound_exceeded,
                "chain_nodes": self.chain_nodes,
                "violations": [v.to_dict() for v in self.violations],
            },
            indent=2,
        )


# ---------------------------------------------------------------------------
# indexing
# ---------------------------------------------------------------------------


class TraceIndex:
    """Lookups shared by all rules."""

    def __init__(self, trace: Trace) -> None:
        self.trace = trace
        history = trace.history()
        if not well_formed(history):
            raise MalformedTraceError("history of the trace is not well-formed")
        self.history = history
        self.ops = history.operations()
        self.txns = list(dict.fromkeys(e.txn for e in trace))
        self.bounds = trace.bounds()

        self.views: dict[tuple[int, str], list[Event]] = defaultdict(list)
        self.routine: dict[tuple[int, str], list[Event]] = defaultdict(list)
        self.recovery: dict[tuple[int, str], list[Event]] = defaultdict(list)
        self.updates_on: dict[str, list[Event]] = defaultdict(list)
        self.access_on: dict[tuple[int, str], list[Event]] = defaultdict(list)
        self.eset: dict[int, set[str]] = defaultdict(set)
        for e in trace:
            if e.kind is Kind.VIEW:
                self.views[(e.txn, e.var)].append(e)
            elif e.kind is Kind.UPDATE:
                self.routine[(e.txn, e.var)].append(e)
            elif e.kind is Kind.RECOVERY:
                self.recovery[(e.txn, e.var)].append(e)
            else:
                continue
            if e.kind in (Kind.UPDATE, Kind.RECOVERY):
                self.updates_on[e.var].append(e)
            if e.kind in (Kind.VIEW, Kind.UPDATE):
                self.access_on[(e.txn, e.var)].append(e)
                self.eset[e.txn].add(e.var)
        self._update_seqs = {x: [e.seq for e in evs] for x, evs in self.updates_on.items()}

        self.committed: dict[int, Event] = {}
        self.aborted: dict[int, Event] = {}
        for op in self.ops:
            if op.resp is None:
                continue
            if op.resp.kind is Kind.RESP_TRYC and not op.resp.aborted:
                self.committed[op.txn] = op.resp
            elif op.resp.aborted:
                self.aborted[op.txn] = op.resp

        self.writes: dict[tuple[int, str], list[Operation]] = defaultdict(list)
        self.reads: list[Operation] = []
        for op in self.ops:
            if op.inv.kind is Kind.INV_WRITE:
                if op.complete and not op.aborted:
                    self.writes[(op.txn, op.var)].append(op)
            elif op.inv.kind is Kind.INV_READ and op.complete and not op.aborted:
                self.reads.append(op)

    # -- helpers --------------------------------------------------------------

    def prefacing_update(self, var: str, seq: int) -> Event | None:
        """Most recent update or recovery on ``var`` before ``seq``."""
        seqs = self._update_seqs.get(var, [])
        pos = bisect.bisect_left(seqs, seq)
        return self.updates_on[var][pos - 1] if pos else None

    def view(self, txn: int, var: str) -> Event | None:
        evs = self.views.get((txn, var))
        return evs[0] if evs else None

    def routine_update(self, txn: int, var: str) -> Event | None:
        evs = self.routine.get((txn, var))
        return evs[0] if evs else None

    def closing_writes(self) -> dict[tuple[int, str], Operation]:
        from .luopacity_checker import closing_writes

        return closing_writes(self.history, self.bounds)

    def write_before(self, txn: int, var: str, seq: int) -> Operation | None:
        """Latest successful write of ``txn`` on ``var`` invoked before ``seq``."""
        last = None
        for op in self.writes.get((txn, var), ()):
            if op.inv.seq < seq:
                last = op
        return last

    def views_pairs(self, virtual: bool) -> dict[tuple[int, int], list[tuple[Event, Event]]]:
        """``(viewer, supplier) -> [(update, view)]``.

        A viewer *views* a supplier when the supplier's routine update
        prefaces the view with the same value; it *virtually views* it when
        the update merely precedes the view.
        """
        out: dict[tuple[int, int], list[tuple[Event, Event]]] = defaultdict(list)
        for (viewer, var), evs in self.views.items():
            for v in evs:
                if virtual:
                    for u in self.updates_on.get(var, ()):
                        if u.seq > v.seq:
                            break
                        if u.kind is Kind.UPDATE and u.txn != viewer and u.value == v.value:
                            out[(viewer, u.txn)].append((u, v))
                else:
                    u = self.prefacing_update(var, v.seq)
                    if u is not None and u.kind is Kind.UPDATE and u.txn != viewer and u.value == v.value:
                        out[(viewer, u.txn)].append((u, v))
        return out


@dataclass
class IsolationOrder:
    """Per-variable, direct and transitive isolation orders."""

    per_var: dict[str, set[tuple[int, int]]]
    direct: set[tuple[int, int]]
    transitive: set[tuple[int, int]]

    def before_on(self, var: str, a: int, b: int) -> bool:
        return (a, b) in self.per_var.get(var, ())

    def before(self, a: int, b: int) -> bool:
        return (a, b) in self.transitive


def isolation_order(idx: TraceIndex, report: ViolationReport | None = None) -> IsolationOrder:
    per_var: dict[str, set[tuple[int, int]]] = defaultdict(set)
    by_var: dict[str, list[int]] = defaultdict(list)
    for (txn, var) in idx.access_on:
        by_var[var].append(txn)
    for var, txns in by_var.items():
        for pos, a in enumerate(txns):
            for b in txns[pos + 1:]:
                ea, eb = idx.access_on[(a, var)], idx.access_on[(b, var)]
                if ea[-1].seq < eb[0].seq:
                    per_var[var].add((a, b))
                elif eb[-1].seq < ea[0].seq:
                    per_var[var].add((b, a))
                elif report is not None:
                    report.add(
                        "isolation",
                        [e.seq for e in ea + eb],
                        f"T{a} and T{b} interleave their accesses to {var}",
                    )
    direct: set[tuple[int, int]] = set()
    for a in idx.txns:
        for b in idx.txns:
            if a >= b:
                continue
            shared = idx.eset[a] & idx.eset[b]
            if not shared:
                continue
            forward = {x for x in shared if (a, b) in per_var[x]}
            backward = {x for x in shared if (b, a) in per_var[x]}
            if forward == shared:
                direct.add((a, b))
            elif backward == shared:
                direct.add((b, a))
            elif report is not None and forward and backward:
                seqs = [e.seq for x in shared for t in (a, b) for e in idx.access_on[(t, x)]]
                report.add(
                    "isolation",
                    seqs,
                    f"T{a} precedes T{b} on {sorted(forward)} but follows it on {sorted(backward)}",
                )
    transitive = set(direct)
    changed = True
    while changed:
        changed = False
        for (a, b) in list(transitive):
            for (c, d) in list(transitive):
                if b == c and (a, d) not in transitive:
                    transitive.add((a, d))
                    changed = True
    if report is not None:
        cyclic = sorted({a for (a, b) in transitive if a == b})
        if cyclic:
            seqs = [e.seq for t in cyclic for x in idx.eset[t] for e in idx.access_on[(t, x)]]
            report.add("isolation", seqs, f"isolation order is cyclic through {['T%d' % t for t in cyclic]}")
    return IsolationOrder(dict(per_var), direct, transitive)


# ---------------------------------------------------------------------------
# event rules
# ---------------------------------------------------------------------------


def _minimalism(idx: TraceIndex, report: ViolationReport) -> None:
    for name, table in (("view", idx.views), ("routine update", idx.routine), ("recovery", idx.recovery)):
        for (txn, var), evs in table.items():
            if len(evs) > 1:
                report.add("minimalism", [e.seq for e in evs], f"T{txn} has {len(evs)} {name} events on {var}")


def _unique_writes(idx: TraceIndex, report: ViolationReport) -> None:
    seen: dict[object, Operation] = {}
    for op in sorted((w for ws in idx.writes.values() for w in ws), key=lambda o: o.inv.seq):
        value = op.inv.value
        if value in seen:
            first = seen[value]
            report.add("unique-writes", [first.inv.seq, op.inv.seq], f"value {value} written twice")
        else:
            seen[value] = op


def _write_consonant(op: Operation) -> bool:
    value = op.inv.value
    return isinstance(value, int) and not isinstance(value, bool) and value != 0


def _view_consonant(idx: TraceIndex, v: Event) -> bool:
    u = idx.prefacing_update(v.var, v.seq)
    if u is None:
        return v.value == 0
    if u.txn == v.txn or u.value != v.value:
        return False
    if u.kind is Kind.UPDATE:
        # the supplier's last routine update on the variable
        return v.value != 0 and idx.routine[(u.txn, u.var)][-1] is u
    return True


def check_event_rules(trace: Trace | TraceIndex, report: ViolationReport | None = None) -> ViolationReport:
    """Minimalism, unique writes, isolation and all consonance rules."""
    idx = trace if isinstance(trace, TraceIndex) else TraceIndex(trace)
    report = report if report is not None else ViolationReport()
    _minimalism(idx, report)
    _unique_writes(idx, report)
    order = isolation_order(idx, report)

    for ws in idx.writes.values():
        for op in ws:
            if not _write_consonant(op):
                report.add("write-consonance", [op.inv.seq, op.resp.seq], f"T{op.txn} wrote {op.inv.value!r} to {op.var}")

    for (txn, var), evs in idx.views.items():
        for v in evs:
            if not _view_consonant(idx, v):
                u = idx.prefacing_update(var, v.seq)
                seqs = [v.seq] + ([u.seq] if u else [])
                report.add("view-consonance", seqs, f"T{txn} viewed {v.value} on {var} but memory held another value")

    for (txn, var), evs in idx.routine.items():
        for u in evs:
            op = idx.write_before(txn, var, u.seq)
            writes = [w for w in idx.writes.get((txn, var), ()) if w.inv.seq < u.seq and w.inv.value == u.value]
            if not writes or not _write_consonant(writes[-1]):
                seqs = [u.seq] + ([op.inv.seq] if op else [])
                report.add("routine-update-consonance", seqs, f"no write of T{txn} instigates update {var}={u.value}")

    for (txn, var), evs in idx.recovery.items():
        for a in evs:
            problem = _recovery_problem(idx, order, a)
            if problem:
                seqs, why = problem
                report.add("recovery-update-consonance", [a.seq, *seqs], why)

    for op in idx.reads:
        txn, var, value = op.txn, op.var, op.resp.value
        local = idx.write_before(txn, var, op.inv.seq)
        if local is None:
            v = idx.view(txn, var)
            if v is None or v.seq > op.resp.seq or v.value != value:
                report.add(
                    "non-local-read-consonance",
                    [op.inv.seq, op.resp.seq] + ([v.seq] if v else []),
                    f"T{txn} read {value} from {var} without a matching view",
                )
        elif local.inv.value != value or not _write_consonant(local):
            report.add(
                "local-read-consonance",
                [local.inv.seq, op.inv.seq, op.resp.seq],
                f"T{txn} read {value} from {var} after writing {local.inv.value}",
            )
    return report


def _recovery_problem(idx: TraceIndex, order: IsolationOrder, a: Event) -> tuple[list[int], str] | None:
    txn, var = a.txn, a.var
    first = idx.access_on.get((txn, var), [])
    v = idx.view(txn, var)
    if v is None or first[0] is not v or v.seq > a.seq or not _view_consonant(idx, v) or v.value != a.value:
        return [], f"recovery of {var} by T{txn} is not backed by its initial view"
    u = idx.routine_update(txn, var)
    if u is None or u.seq > a.seq:
        return [], f"recovery of {var} by T{txn} restores nothing T{txn} updated"
    commit = idx.committed.get(txn)
    if commit is not None and commit.seq > a.seq:
        return [commit.seq], f"T{txn} commits after recovering {var}"
    later = [e.seq for e in idx.access_on.get((txn, var), []) if e.seq > a.seq]
    if later:
        return later, f"T{txn} touches {var} after recovering it"
    for (other, x), recs in idx.recovery.items():
        if x != var or other == txn or not order.before_on(var, other, txn):
            continue
        for r in recs:
            if v.seq < r.seq < a.seq:
                return [v.seq, r.seq], f"predecessor T{other} recovered {var} between T{txn}'s view and recovery"
    return None


# ---------------------------------------------------------------------------
# commit rules
# ---------------------------------------------------------------------------


def check_commit_rules(trace: Trace | TraceIndex, report: ViolationReport | None = None) -> ViolationReport:
    """Obbligato, decisiveness, accords, coherence and abort coda."""
    idx = trace if isinstance(trace, TraceIndex) else TraceIndex(trace)
    report = report if report is not None else ViolationReport()
    order = isolation_order(idx)
    closing = idx.closing_writes()
    views = idx.views_pairs(virtual=False)

    # committed write obbligato
    for txn, commit in idx.committed.items():
        for (t, var), ws in idx.writes.items():
            if t != txn:
                continue
            last = max((w for w in ws if w.inv.seq < commit.seq), key=lambda w: w.inv.seq, default=None)
            if last is None:
                continue
            u = idx.routine_update(txn, var)
            if u is None or u.seq > commit.seq or u.value != last.inv.value or u.seq < last.inv.seq:
                report.add(
                    "committed-write-obbligato",
                    [last.inv.seq, commit.seq] + ([u.seq] if u else []),
                    f"T{txn} committed without storing its write of {var}",
                )

    # closing and view write obbligato
    for (txn, var), ws in idx.writes.items():
        aborted = idx.aborted.get(txn)
        for (viewer, x), vs in idx.views.items():
            if x != var or viewer == txn or not order.before(txn, viewer):
                continue
            for v in vs:
                excused = aborted is not None and aborted.seq < v.seq
                earlier = [w for w in ws if w.inv.seq < v.seq]
                if not earlier or excused:
                    continue
                op = closing.get((txn, var))
                if op is not None and op in earlier:
                    u = idx.routine_update(txn, var)
                    if u is None or u.value != op.inv.value or not (op.inv.seq < u.seq < v.seq):
                        report.add(
                            "closing-write-obbligato",
                            [op.inv.seq, v.seq] + ([u.seq] if u else []),
                            f"T{viewer} viewed {var} before T{txn} stored its closing write",
                        )
                stored = [e for e in idx.updates_on.get(var, ()) if e.txn == txn and e.seq < v.seq]
                if not stored:
                    report.add(
                        "view-write-obbligato",
                        [earlier[0].inv.seq, v.seq],
                        f"T{viewer} viewed {var} before T{txn} stored or abandoned its write",
                    )

    # decisiveness, commit accord, abort accord (a)
    for (viewer, supplier), pairs in views.items():
        for u, v in pairs:
            op = closing.get((supplier, u.var))
            decided = op is not None and op.resp.seq < v.seq
            commit = idx.committed.get(supplier)
            if not decided and not (commit is not None and u.seq < commit.seq < v.seq):
                report.add(
                    "decisiveness",
                    [u.seq, v.seq],
                    f"T{viewer} viewed {u.var} from T{supplier} before T{supplier} decided on it",
                )
        if viewer in idx.committed and supplier not in idx.committed:
            u, v = pairs[0]
            report.add(
                "commit-accord",
                [u.seq, v.seq, idx.committed[viewer].seq],
                f"T{viewer} committed after viewing T{supplier}, which did not commit",
            )
        if supplier in idx.aborted and viewer in idx.committed:
            u, v = pairs[0]
            report.add(
                "abort-accord",
                [u.seq, v.seq, idx.committed[viewer].seq],
                f"T{viewer} committed after viewing aborted T{supplier}",
            )

    # abort accord (b)
    for (txn, var), recs in idx.recovery.items():
        u = idx.routine_update(txn, var)
        if u is None:
            continue
        for a in recs:
            for (other, x), evs in idx.access_on.items():
                if x != var or other == txn or other not in idx.committed:
                    continue
                hit = [e for e in evs if u.seq < e.seq < a.seq]
                if hit:
                    report.add(
                        "abort-accord",
                        [u.seq, hit[0].seq, a.seq, idx.committed[other].seq],
                        f"T{other} accessed {var} between T{txn}'s update and recovery, yet committed",
                    )

    # coherence
    for var, pairs in order.per_var.items():
        for before, after in pairs:
            commit = idx.committed.get(after)
            if commit is None:
                continue
            reader_only = idx.routine_update(before, var) is None and not any(
                op.inv.kind is Kind.INV_WRITE and op.txn == before and op.var == var for op in idx.ops
            )
            if reader_only:
                continue
            done = idx.committed.get(before) or idx.aborted.get(before)
            if done is None or done.seq > commit.seq:
                report.add(
                    "coherence",
                    [commit.seq] + ([done.seq] if done else []),
                    f"T{after} committed before its predecessor T{before} on {var} finished",
                )

    # abort coda
    for (txn, var), us in idx.routine.items():
        u = us[0]
        recovered_by = [txn] + [t for t in idx.txns if order.before_on(var, t, txn)]
        if txn in idx.aborted:
            end = idx.aborted[txn]
            ok = any(
                u.seq < a.seq < end.seq for t in recovered_by for a in idx.recovery.get((t, var), ())
            )
            if not ok:
                report.add("abort-coda", [u.seq, end.seq], f"aborted T{txn} left its update of {var} in place")
    for txn, commit in idx.committed.items():
        for var in idx.eset[txn]:
            recovered_by = [txn] + [t for t in idx.txns if order.before_on(var, t, txn)]
            first = idx.access_on[(txn, var)][0]
            for t in recovered_by:
                for a in idx.recovery.get((t, var), ()):
                    if first.seq < a.seq < commit.seq:
                        report.add(
                            "abort-coda",
                            [first.seq, a.seq, commit.seq],
                            f"committed T{txn} had {var} reverted by T{t}",
                        )
    return report


# ---------------------------------------------------------------------------
# view chains
# ---------------------------------------------------------------------------


class _BoundExceeded(Exception):
    pass


def _chain_isolated(idx: TraceIndex, chain: list[int]) -> tuple[list[int], str] | None:
    members = set(chain)
    later_events = sorted(e.seq for t in members for x in idx.eset[t] for e in idx.access_on[(t, x)])
    for k in chain:
        for var in idx.eset[k]:
            u = idx.routine_update(k, var)
            if u is None:
                continue
            for a in idx.updates_on.get(var, ()):
                if a.kind is not Kind.RECOVERY or a.seq < u.seq:
                    continue
                lv = idx.view(a.txn, var)
                if lv is not None and lv.seq > u.seq:
                    continue  # restores a state that already contained the update
                pos = bisect.bisect_right(later_events, a.seq)
                if pos < len(later_events):
                    return [u.seq, a.seq, later_events[pos]], (
                        f"T{a.txn} reverted T{k}'s update of {var} inside chain {_fmt(chain)}"
                    )
    return None


def _chain_self_contained(idx: TraceIndex, chain: list[int]) -> tuple[list[int], str] | None:
    position = {t: n for n, t in enumerate(chain)}
    for k in chain:
        if k in idx.committed:
            continue  # committed updates are visible to everyone anyway
        for var in idx.eset[k]:
            u = idx.routine_update(k, var)
            if u is None:
                continue
            for l in chain:
                if l == k:
                    continue
                v = idx.view(l, var)
                if v is None or v.seq < u.seq or v.value == u.value:
                    continue
                between = [
                    m for m in chain
                    if position[k] < position[m] < position[l]
                    and (um := idx.routine_update(m, var)) is not None
                    and um.value == v.value
                    and u.seq < um.seq < v.seq
                ]
                if not between:
                    return [u.seq, v.seq], (
                        f"T{l} viewed {var}={v.value} from outside chain {_fmt(chain)} after T{k}'s update"
                    )
    return None


def _fmt(chain: list[int]) -> str:
    return "->".join(f"T{t}" for t in chain)


def check_chain_consistency(
    trace: Trace | TraceIndex,
    report: ViolationReport | None = None,
    max_nodes: int = DEFAULT_MAX_CHAIN_NODES,
) -> ViolationReport:
    """Every pair linked by a view chain must be linked by a consistent one.

    Chains follow *virtually views* edges from supplier to viewer and are
    simple paths of at least two transactions.  For each ordered pair the
    rule holds if some chain between them is both isolated and
    self-contained.  Enumeration visits at most ``max_nodes`` chain nodes;
    beyond that the report is marked ``bound_exceeded``.
    """
    idx = trace if isinstance(trace, TraceIndex) else TraceIndex(trace)
    report = report if report is not None else ViolationReport()
    successors: dict[int, list[int]] = defaultdict(list)
    for (viewer, supplier) in idx.views_pairs(virtual=True):
        successors[supplier].append(viewer)
    # best verdict per pair: 2 = consistent, 1 = isolated only, 0 = neither
    best: dict[tuple[int, int], tuple[int, tuple[list[int], str]]] = {}
    nodes = 0

    def visit(chain: list[int]) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise _BoundExceeded
        if len(chain) >= 2:
            pair = (chain[0], chain[-1])
            current = best.get(pair)
            if current is None or current[0] < 2:
                broken = _chain_isolated(idx, chain)
                leak = None if broken else _chain_self_contained(idx, chain)
                score = 0 if broken else (1 if leak else 2)
                if current is None or score > current[0]:
                    best[pair] = (score, broken or leak or ([], ""))
        for nxt in successors.get(chain[-1], ()):
            if nxt not in chain:
                chain.append(nxt)
                visit(chain)
                chain.pop()

    try:
        for start in idx.txns:
            visit([start])
    except _BoundExceeded:
        report.bound_exceeded = True
    report.chain_nodes += nodes
    if report.bound_exceeded:
        return report
    for pair, (score, (seqs, why)) in sorted(best.items()):
        if score == 0:
            report.add("chain-isolation", seqs, why)
        elif score == 1:
            report.add("chain-self-containment", seqs, why)
    return report


# ---------------------------------------------------------------------------
# harmony
# ---------------------------------------------------------------------------


def check_harmony(
    trace: Trace,
    rules: Iterable[str] | None = None,
    max_chain_nodes: int = DEFAULT_MAX_CHAIN_NODES,
) -> ViolationReport:
    """All rules (or only ``rules``); an empty report means harmonious."""
    wanted = set(RULES if rules is None else rules)
    unknown = wanted - set(RULES)
    if unknown:
        raise ValueError(f"unknown rules {sorted(unknown)}")
    idx = TraceIndex(trace)
    report = ViolationReport()
    check_event_rules(idx, report)
    check_commit_rules(idx, report)
    chain_rules = {"chain-isolation", "chain-self-containment"}
    if wanted & chain_rules and "isolation" not in report.rules():
        check_chain_consistency(idx, report, max_chain_nodes)
    report.violations = [v for v in report.violations if v.rule in wanted]
    if not wanted & chain_rules:
        report.bound_exceeded = False
    return report
