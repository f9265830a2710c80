import io

import pytest

from optsva.trace_model import (
    Event,
    History,
    HistoryError,
    Kind,
    Trace,
    TraceRecorder,
    TraceSealedError,
    read_trace_lines,
    timing,
    unique_writes,
    well_formed,
)
from trace_dsl import build

SIMPLE = """
T1 declare x 0 1
T2 declare x 1 0
T1 start
T2 start
T1 view x 0
T1 write x 1
T1 update x 1
T2 view x 1
T2 read x 1
T1 commit
T2 commit
"""


def test_jsonl_round_trip():
    trace = build(SIMPLE)
    again = Trace.from_jsonl(trace.to_jsonl())
    assert again == trace
    buf = io.StringIO()
    trace.dump(buf)
    assert read_trace_lines(buf.getvalue().splitlines()) == trace


def test_file_round_trip(tmp_path):
    trace = build(SIMPLE)
    path = tmp_path / "t.trace"
    trace.dump(path)
    assert Trace.load(path) == trace


def test_unknown_field_rejected():
    with pytest.raises(ValueError):
        Event.from_json('{"seq":0,"txn":1,"kind":"inv_start","colour":"red"}')


def test_recorder_seal():
    rec = TraceRecorder()
    rec.record(1, Kind.INV_START)
    trace = rec.seal()
    assert len(trace) == 1
    with pytest.raises(TraceSealedError):
        rec.record(1, Kind.RESP_START)


def test_non_increasing_seq_rejected():
    with pytest.raises(ValueError):
        Trace((Event(1, 1, Kind.INV_START), Event(1, 1, Kind.RESP_START)))


def test_projections_and_status():
    trace = build(SIMPLE)
    h = trace.history()
    assert all(e.is_api for e in h)
    assert h.txns == [1, 2]
    assert [e.kind for e in h.project_txn(2)][-1] is Kind.RESP_TRYC
    assert [e.kind for e in h.project_var("x")] == [Kind.INV_WRITE, Kind.RESP_WRITE, Kind.INV_READ, Kind.RESP_READ]
    assert h.status(1) == "committed"
    assert h.prefix(len(h) - 1).status(2) == "commit-pending"
    assert h.prefix(4).status(1) == "live"
    assert h.status(9) == "absent"


def test_real_time_order():
    h = build("""
        T1 start
        T1 commit
        T2 start
        T2 commit
    """).history()
    assert h.precedes(1, 2) and not h.precedes(2, 1)


def test_bounds_from_trace():
    b = build(SIMPLE).bounds()
    assert (b[1]["x"].rub, b[1]["x"].wub) == (0, 1)
    assert (b[2]["x"].rub, b[2]["x"].wub) == (1, 0)


@pytest.mark.parametrize(
    "events, ok",
    [
        ([Event(0, 1, Kind.INV_START), Event(1, 1, Kind.RESP_START, outcome="ok")], True),
        ([Event(0, 1, Kind.INV_READ, "x")], False),
        ([Event(0, 1, Kind.INV_START), Event(1, 1, Kind.INV_TRYC)], False),
        (
            [
                Event(0, 1, Kind.INV_START),
                Event(1, 1, Kind.RESP_START, outcome="ok"),
                Event(2, 1, Kind.INV_TRYA),
                Event(3, 1, Kind.RESP_TRYA, outcome="aborted"),
                Event(4, 1, Kind.INV_READ, "x"),
            ],
            False,
        ),
    ],
)
def test_well_formed(events, ok):
    assert well_formed(History(tuple(events))) is ok


def test_unmatched_response_raises():
    h = History((Event(0, 1, Kind.RESP_READ, "x", 1, "ok"),))
    with pytest.raises(HistoryError):
        h.operations()


def test_unique_writes():
    assert unique_writes(build(SIMPLE).history())
    dup = build("""
        T1 start
        T1 write x 1
        T2 start
        T2 write y 1
    """)
    assert not unique_writes(dup.history())


def test_timing_markers():
    rec = TraceRecorder()
    rec.record(1, Kind.RELEASE, "x")
    rec.record(1, Kind.TERMINATE, "x")
    t = timing(rec.seal())
    assert t.release_time == {(1, "x"): 0}
    assert t.completion_time == {(1, "x"): 1}
    assert t.exec_time == 1
