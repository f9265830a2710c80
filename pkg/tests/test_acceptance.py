"""Acceptance suite: one verdict line per criterion, shown in the summary.

Budgets and tolerances are pinned here.  Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import itertools
import statistics

import pytest

from adversarial import LU_NEGATIVE_CONTROL, NOT_ISOLABLE, trace_for
from optsva.async_engine import random_policy
from optsva.bench_harness import (
    FIGURES,
    WorkloadSpec,
    compare,
    figure,
    generate,
    replay_with_outcome,
    simulate,
    stress_run,
    sweep,
)
from optsva.harmony_checker import RULES, check_harmony
from optsva.luopacity_checker import check_lu_opaque
from optsva.program import Op, ProgramModel, TxnScript, explore_program, run_scheduled
from optsva.tm_core import OptSvaEngine
from optsva.trace_model import Kind
from trace_dsl import build

STRESS_RUNS = 10_000
LU_MAX_TXNS = 5


def test_no_forced_aborts_without_manual_aborts(criterion):
    c = criterion(1, "no forced aborts, 1000 workloads x 8 threads x 10 txns", 120)
    forced = 0
    for seed in range(1000):
        spec = WorkloadSpec(
            threads=8,
            txns_per_thread=10,
            ops_per_txn=(5, 10)[seed % 2],
            rw_ratio=("5:1", "1:5")[seed // 2 % 2],
            hot_size=(20, 80)[seed // 4 % 2],
            seed=seed,
        )
        program = generate(spec)
        _, outcome = run_scheduled(OptSvaEngine(program.variables), program, random_policy(seed))
        assert outcome.manual_aborts == 0
        forced += outcome.forced_aborts
    assert c.done(forced == 0, f"{forced} forced aborts")


def test_random_runs_are_harmonious(criterion):
    c = criterion(2, f"harmony on {STRESS_RUNS} random runs", 600)
    bad = [seed for seed in range(STRESS_RUNS) if not check_harmony(stress_run(seed)[2]).harmonious]
    assert c.done(not bad, f"{len(bad)} violations" + (f", first seed {bad[0]}" if bad else ""))


@pytest.mark.xfail(
    strict=True,
    reason="abort-accord, commit-accord and chain-self-containment cannot be broken without "
    "breaking another rule; see NOT_ISOLABLE",
)
def test_each_adversarial_trace_breaks_exactly_its_rule(criterion):
    c = criterion(3, "adversarial traces rejected with exactly the intended rule", 1)
    exact, wrong = 0, []
    for rule in RULES:
        got = check_harmony(trace_for(rule)).rules()
        if got == {rule}:
            exact += 1
        else:
            wrong.append(f"{rule}->{sorted(got)}")
    detail = f"{exact}/{len(RULES)} exact" + (f"; {'; '.join(wrong)}" if wrong else "")
    assert c.done(exact == len(RULES), detail)


def test_non_isolable_rules_fail_as_analysed():
    # the only departures from criterion 3 are the analysed ones
    for rule in RULES:
        got = check_harmony(trace_for(rule)).rules()
        assert got == NOT_ISOLABLE.get(rule, {rule})


def test_small_random_runs_are_last_use_opaque(criterion):
    c = criterion(4, f"last-use opacity on runs with <= {LU_MAX_TXNS} txns, plus negative control", 900)
    checked, bad = 0, []
    for seed in range(STRESS_RUNS):
        program, _, trace = stress_run(seed)
        if len(program.txns) > LU_MAX_TXNS:
            continue
        checked += 1
        if not check_lu_opaque(trace.history(), program, trace).opaque:
            bad.append(seed)
    control = build(LU_NEGATIVE_CONTROL)
    rejected = not check_lu_opaque(control.history(), control.bounds()).opaque
    detail = f"{checked} checked, {len(bad)} rejected, control {'rejected' if rejected else 'ACCEPTED'}"
    assert c.done(not bad and rejected and checked > 0, detail)


def test_optsva_never_slower_than_sva(criterion):
    c = criterion(5, "makespan, release and completion dominance on 100 programs", None)
    problems = []
    for seed in range(100):
        spec = WorkloadSpec(
            threads=(2, 4, 8)[seed % 3],
            txns_per_thread=(3, 10)[seed % 2],
            ops_per_txn=(5, 10)[seed // 2 % 2],
            rw_ratio=("5:1", "1:1", "1:5")[seed % 3],
            hot_size=(5, 20, 80)[seed // 3 % 3],
            seed=seed,
        )
        program = generate(spec)
        sva, _, _ = simulate(program, "sva")
        opt, _, _ = simulate(program, "optsva")
        if opt.makespan > sva.makespan:
            problems.append(f"seed {seed} makespan")
        for key, when in opt.release_times.items():
            if when > sva.release_times[key]:
                problems.append(f"seed {seed} release {key}")
        for key, when in opt.completion_times.items():
            if when > sva.completion_times[key]:
                problems.append(f"seed {seed} completion {key}")
    assert c.done(not problems, f"{len(problems)} violations" + (f", first {problems[0]}" if problems else ""))


def test_gain_grows_with_contention(criterion):
    c = criterion(6, "positive gains, high contention above low (8 configs, 30 seeds, 8 threads)", None)
    table = compare(sweep(range(30), threads=8))
    assert len(table) == 8 and all(r.runs == 30 for r in table)
    high = statistics.fmean(r.gain for r in table if r.contention == "high")
    low = statistics.fmean(r.gain for r in table if r.contention == "low")
    gains = ", ".join(f"{r.gain:.1f}" for r in table)
    ok = all(r.gain > 0 for r in table) and high > low
    assert c.done(ok, f"gains [{gains}] %, high mean {high:.1f} vs low mean {low:.1f}")


def _seq(trace, txn, kind, var=None, value=None, nth=0):
    hits = [e.seq for e in trace if e.txn == txn and e.kind is kind
            and (var is None or e.var == var) and (value is None or e.value == value)]
    return hits[nth]


def _figure_checks():
    def access_control(tr, out):
        return (_seq(tr, 2, Kind.INV_READ) < _seq(tr, 1, Kind.RESP_TRYC) < _seq(tr, 2, Kind.RESP_READ)
                and out.txns[2].reads == [("x", 1)])

    def early_release(tr, out):
        return _seq(tr, 2, Kind.RESP_READ) < _seq(tr, 1, Kind.RESP_TRYC) and out.txns[2].reads == [("x", 1)]

    def commit_order(tr, out):
        return _seq(tr, 1, Kind.RESP_TRYC) < _seq(tr, 2, Kind.RESP_TRYC)

    def forced_abort(tr, out):
        return out.txns[2].status == "aborted" and out.txns[2].forced and out.txns[2].reads == [("x", 1)]

    def read_only(tr, out):
        return (_seq(tr, 2, Kind.RELEASE, "x") < _seq(tr, 3, Kind.RESP_READ)
                and _seq(tr, 3, Kind.UPDATE, "x", 2) < _seq(tr, 2, Kind.RESP_READ, nth=1)
                and out.txns[2].reads == [("x", 1), ("x", 1)])

    def initial_writes(tr, out):
        return _seq(tr, 2, Kind.RESP_WRITE) < _seq(tr, 1, Kind.RELEASE, "x") and out.txns[2].reads == [("x", 2)]

    def final_writes(tr, out):
        return (_seq(tr, 2, Kind.UPDATE, "x", 2) < _seq(tr, 1, Kind.RESP_READ, nth=1)
                and out.txns[1].reads == [("x", 0), ("x", 1)])

    return {
        "access-control": access_control,
        "early-release": early_release,
        "commit-order": commit_order,
        "forced-abort": forced_abort,
        "read-only": read_only,
        "initial-writes": initial_writes,
        "final-writes": final_writes,
    }


def test_figure_replays_order_events_as_drawn(criterion):
    c = criterion(7, "figure replays keep their happens-before order", 1)
    checks = _figure_checks()
    assert set(checks) == set(FIGURES)
    failed = []
    for name in FIGURES:
        trace, outcome = replay_with_outcome(figure(name))
        if not checks[name](trace, outcome):
            failed.append(name)
    assert c.done(not failed, f"{len(FIGURES) - len(failed)}/{len(FIGURES)} hold" + (f", failed {failed}" if failed else ""))


ATOMS = (("read", "x"), ("read", "y"), ("write", "x"), ("write", "y"))


def _scripts(max_ops):
    for n in range(1, max_ops + 1):
        yield from itertools.product(ATOMS, repeat=n)


def _programs(count, max_ops):
    for combo in itertools.combinations_with_replacement(list(_scripts(max_ops)), count):
        values = itertools.count(1)
        txns = []
        for i, script in enumerate(combo):
            ops = [Op(k, v, next(values)) if k == "write" else Op(k, v) for k, v in script]
            txns.append(TxnScript(i + 1, i, ops + [Op("commit")]))
        yield ProgramModel(["x", "y"], txns)


def _serial_check(program):
    scripts = {s.txn: s for s in program.txns}

    def visit(engine, outcome, sched):
        assert all(o.status == "committed" for o in outcome.txns.values())
        memory = {v: 0 for v in program.variables}
        expected_reads = {t: [] for t in scripts}
        pv = {t: h.pv for t, h in engine.handles.items()}
        for var in program.variables:
            for txn in sorted((t for t in pv if var in pv[t]), key=lambda t: pv[t][var]):
                for op in scripts[txn].ops:
                    if op.var != var:
                        continue
                    if op.kind == "write":
                        memory[var] = op.value
                    else:
                        expected_reads[txn].append((var, memory[var]))
        assert {v: engine.cells[v].value for v in program.variables} == memory
        for txn, reads in expected_reads.items():
            got = [r for r in outcome.txns[txn].reads]
            assert sorted(got, key=lambda r: r[0]) == sorted(reads, key=lambda r: r[0])

    return visit


def test_all_commit_runs_equal_serial_execution(criterion):
    c = criterion(8, "serial equivalence over every interleaving, <= 3 txns, <= 2 vars", 300)
    programs = list(itertools.chain(_programs(1, 2), _programs(2, 2), _programs(3, 1)))
    runs = 0
    failures = []
    for program in programs:
        try:
            runs += explore_program(OptSvaEngine, program, _serial_check(program))
        except AssertionError:
            failures.append(program)
    detail = f"{len(programs)} programs, {runs} interleavings, {len(failures)} mismatches"
    assert c.done(not failures, detail)
