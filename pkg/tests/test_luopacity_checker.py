import pytest

from optsva import bench_harness as bench
from optsva.luopacity_checker import (
    LuBoundExceeded,
    build_seq,
    check_final_state_lu_opaque,
    check_lu_opaque,
    closing_writes,
    legal,
    lvis_construction,
    program_bounds,
)
from adversarial import LU_NEGATIVE_CONTROL as NEGATIVE_CONTROL
from trace_dsl import build


def test_legal():
    assert legal([("read", "x", 0), ("write", "x", 1), ("read", "x", 1)])
    assert not legal([("write", "x", 1), ("read", "x", 0)])
    assert not legal([("write", "x", 0)])


def test_closing_writes_use_declared_bound():
    trace = build("""
        T1 declare x 0 2
        T1 start
        T1 write x 1
        T1 write x 2
    """)
    closing = closing_writes(trace.history(), trace.bounds())
    assert closing[(1, "x")].inv.value == 2
    with pytest.raises(ValueError):
        closing_writes(trace.history(), {1: {"x": (0, 1)}})


def test_negative_control_rejected():
    trace = build(NEGATIVE_CONTROL)
    verdict = check_lu_opaque(trace.history(), trace.bounds())
    assert not verdict.opaque
    # already the read of the undecided value has no legal explanation
    assert verdict.violating_prefix[-1].endswith("T2 resp_read x 1 ok")
    assert check_lu_opaque(trace.history(), trace.bounds(), enumerate_only=True).opaque is False


def test_closing_write_variant_is_opaque():
    # same shape but the write is closing and T2 is not allowed to commit
    trace = build("""
        T1 declare x 0 1
        T2 declare x 1 0
        T1 start
        T2 start
        T1 write x 1
        T2 read x 1
        T1 abort
        T2 commit aborted
    """)
    assert check_lu_opaque(trace.history(), trace.bounds()).opaque


def test_read_of_committed_value_is_opaque():
    trace = build("""
        T1 declare x 0 1
        T2 declare x 1 0
        T1 start
        T1 write x 1
        T1 commit
        T2 start
        T2 read x 1
        T2 commit
    """)
    verdict = check_lu_opaque(trace.history(), trace.bounds())
    assert verdict.opaque and verdict.witness == [1, 2]


def test_bound_exceeded_raises():
    lines = []
    for t in range(1, 4):
        lines += [f"T{t} start", f"T{t} commit"]
    trace = build("\n".join(lines))
    with pytest.raises(LuBoundExceeded):
        check_lu_opaque(trace.history(), {}, max_txns=2)


def test_forced_abort_replay_is_opaque():
    scenario = bench.figure("forced-abort")
    trace = bench.replay(scenario)
    verdict = check_lu_opaque(trace.history(), scenario.program, trace)
    assert verdict.opaque


def test_construction_agrees_with_enumeration():
    used = 0
    for seed in range(120):
        program, _, trace = bench.stress_run(seed)
        bounds = program_bounds(program)
        fast = check_final_state_lu_opaque(trace.history(), bounds, trace)
        slow = check_final_state_lu_opaque(trace.history(), bounds, enumerate_only=True)
        assert fast.opaque == slow.opaque
        used += fast.used_construction
    assert used > 60


def test_build_seq_respects_real_time():
    program, _, trace = bench.stress_run(3)
    order = build_seq(trace.history(), trace)
    h = trace.history()
    for a in h.txns:
        for b in h.txns:
            if a != b and h.precedes(a, b):
                assert order.index(a) < order.index(b)


def test_lvis_construction_of_early_reader():
    trace = bench.replay(bench.figure("early-release"))
    seen = lvis_construction(trace.history(), trace, [1, 2], 2)
    assert ("read", "x", 1) in seen
    assert legal(seen)


def test_verdict_json():
    trace = build(NEGATIVE_CONTROL)
    text = check_lu_opaque(trace.history(), trace.bounds()).to_json()
    assert '"opaque": false' in text
