import json

import pytest

from adversarial import trace_for
from optsva.cli import EXIT_BOUND, EXIT_FAIL, EXIT_INPUT, EXIT_OK, main


def test_replay_then_check(tmp_path, capsys):
    trace_path, program_path = tmp_path / "fa.trace", tmp_path / "fa.json"
    assert main(["bench", "replay", "forced-abort", "--out", str(trace_path), "--program-out", str(program_path)]) == EXIT_OK
    assert '"T2": "aborted (forced)"' in capsys.readouterr().err
    assert main(["check-harmony", str(trace_path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["harmonious"] is True
    assert main(["check-luopacity", str(trace_path), "--program", str(program_path)]) == EXIT_OK


def test_replay_to_stdout(capsys):
    assert main(["bench", "replay", "early-release"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[0])["kind"] == "inv_start"


def test_violation_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.trace"
    trace_for("minimalism").dump(path)
    assert main(["check-harmony", str(path)]) == EXIT_FAIL
    assert main(["check-harmony", str(path), "--rule", "isolation"]) == EXIT_OK


def test_chain_bound_exit_code(tmp_path):
    path = tmp_path / "chain.trace"
    trace_for("chain-isolation").dump(path)
    assert main(["check-harmony", str(path), "--max-chain-nodes", "1"]) == EXIT_BOUND


def test_luopacity_bound_and_scenario_program(tmp_path, capsys):
    script = tmp_path / "s.scn"
    script.write_text("thread 1: write x 1 | commit\nthread 2: read x | commit\n")
    trace_path = tmp_path / "s.trace"
    assert main(["bench", "replay", str(script), "--out", str(trace_path)]) == EXIT_OK
    assert main(["check-luopacity", str(trace_path), "--program", str(script)]) == EXIT_OK
    assert main(["check-luopacity", str(trace_path), "--program", str(script), "--max-txns", "1"]) == EXIT_BOUND


def test_bad_inputs(tmp_path, capsys):
    garbage = tmp_path / "garbage.trace"
    garbage.write_text("not json\n")
    assert main(["check-harmony", str(garbage)]) == EXIT_INPUT
    assert main(["check-harmony", str(tmp_path / "missing")]) == EXIT_INPUT
    bad = tmp_path / "bad.scn"
    bad.write_text("thread 1 read x\n")
    assert main(["bench", "replay", str(bad)]) == EXIT_INPUT
    assert main(["bench", "run", "--threads", "1", "--txns", "1", "--locality", "2", "--no-threads"]) == EXIT_INPUT


def test_deadlocked_scenario(tmp_path, capsys):
    script = tmp_path / "stuck.scn"
    script.write_text("thread 1: barrier a | barrier b | write x 1 | commit\nthread 2: barrier b | barrier a | read x | commit\n")
    assert main(["bench", "replay", str(script)]) == EXIT_BOUND
    assert "deadlocked" in capsys.readouterr().err


def test_run_sweep_report(tmp_path, capsys):
    csv_path = tmp_path / "runs.csv"
    for engine in ("sva", "optsva"):
        assert main(["bench", "run", "--engine", engine, "--threads", "2", "--txns", "2", "--csv", str(csv_path),
                     "--record", str(tmp_path / f"{engine}.trace")]) == EXIT_OK
    runs = capsys.readouterr().out
    assert runs.count('"forced_aborts"') == 2
    assert len(csv_path.read_text().splitlines()) == 3
    assert main(["bench", "report", str(csv_path), "--out-dir", str(tmp_path / "rep"), "--no-chart"]) == EXIT_OK
    table = json.loads(capsys.readouterr().out)
    assert len(table) == 1 and table[0]["runs"] == 1
    sweep_csv = tmp_path / "sweep.csv"
    assert main(["bench", "sweep", "--seeds", "1", "--threads", "2", "--txns", "2", "--out", str(sweep_csv)]) == EXIT_OK
    assert "gain=" in capsys.readouterr().out


def test_report_of_empty_input(capsys):
    assert main(["bench", "report"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == []


def test_argparse_rejects_unknown_rule():
    with pytest.raises(SystemExit):
        main(["check-harmony", "x", "--rule", "nope"])
