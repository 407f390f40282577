import json

import pytest

from dbqc.cli import EXIT_ABORT, EXIT_BREACH, EXIT_OK, EXIT_USAGE, main
from dbqc.pauli import format_code_text, steane_code


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_encode_steane(capsys):
    code, out, err = run(capsys, "encode", "--star", "7", "--seed", "3")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert all(abs(v - 1) < 1e-9 for v in doc["expectations"].values())
    assert doc["setup_cost"] == {"bell": 31, "classical": 69}
    assert max(doc["leaf_trace_distance"].values()) <= 1e-9
    assert "31 Bell pairs" in err


def test_encode_is_reproducible(capsys):
    a = run(capsys, "encode", "--seed", "9")[1]
    b = run(capsys, "encode", "--seed", "9")[1]
    assert a == b


def test_encode_code_file(tmp_path, capsys):
    path = tmp_path / "steane.code"
    path.write_text(format_code_text(steane_code()))
    code, out, _ = run(capsys, "encode", "--code", str(path))
    assert code == EXIT_OK and json.loads(out)["code"] == "steane"


def test_bad_code_file(tmp_path, capsys):
    path = tmp_path / "bad.code"
    path.write_text("2 1\nZZ\nXI\nXX\n")
    code, _, err = run(capsys, "encode", "--code", str(path))
    assert code == EXIT_USAGE
    assert "commute" in err


def test_session_worked_example(capsys):
    code, out, _ = run(capsys, "session", "--gate-list", "H 0;T 0", "--traps", "40", "--star", "47")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["verdict"] == "accepted"
    assert doc["costs"]["observed_model_totals"] == [114, 113]


def test_session_gate_file_and_out(tmp_path, capsys):
    gates = tmp_path / "g.txt"
    gates.write_text("H 0\n")
    out_file = tmp_path / "r.json"
    code, out, _ = run(capsys, "session", "--gates", str(gates), "--traps", "2", "--out", str(out_file))
    assert code == EXIT_OK and out == ""
    assert json.loads(out_file.read_text())["costs"]["observed_model"]["compute"] == [0, 0]


def test_session_abort_exit_code(capsys):
    code, out, _ = run(capsys, "session", "--traps", "10", "--adversary", "random:17", "--seed", "0")
    assert code == EXIT_ABORT
    assert json.loads(out)["fidelity"] is None


def test_session_many_trials(capsys):
    code, out, _ = run(capsys, "session", "--traps", "1", "--trials", "3")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["accepted"] == 3


def test_session_topology_file(tmp_path, capsys):
    topo = tmp_path / "t.txt"
    topo.write_text("client: C\n" + "".join(f"C S{i}\n" for i in range(8)))
    code, out, _ = run(capsys, "session", "--topology", str(topo), "--traps", "1")
    assert code == EXIT_OK


@pytest.mark.parametrize("method,cells", [(1, 12), (2, 18)])
def test_qec_table(capsys, method, cells):
    code, out, err = run(capsys, "qec-table", "--method", str(method))
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["matches"] == doc["cells"] == cells
    assert "Error" in err


def test_qec_table_bad_method(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["qec-table", "--method", "3"])
    assert exc.value.code == EXIT_USAGE


def test_detect_no_traps(capsys):
    code, out, _ = run(capsys, "detect", "--N", "10", "--k-trap", "0", "--trials", "1000")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["empirical_rate"] == 1.0


def test_detect_all_traps_reports_vacuous_bound(capsys):
    code, out, _ = run(capsys, "detect", "--N", "10", "--k-trap", "10", "--trials", "1000")
    doc = json.loads(out)
    assert doc["bound_placement"] == 0 and doc["bound_vacuous"]
    assert code == EXIT_BREACH


def test_detect_too_few_trials(capsys):
    code, _, _ = run(capsys, "detect", "--N", "10", "--k-trap", "1", "--trials", "10")
    assert code == EXIT_USAGE


def test_cost_report(capsys):
    code, out, _ = run(capsys, "cost", "--gate-list", "H 0;T 0", "--traps", "40")
    assert json.loads(out)["totals"] == {"bell": 114, "classical": 113}


def test_missing_command():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE
