import json
import subprocess
import sys

import pytest

from hybridreach.cli import run


def cli(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_csv(capsys):
    code, out, _ = cli(capsys, "simulate", "--system", "bouncing_ball.json", "--x0", "1,0", "--tau", "5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "j,t,x1,x2"
    j, t = lines[-1].split(",")[:2]
    assert float(t) + int(j) <= 5 + 1e-9


def test_simulate_bad_start(capsys):
    code, _, err = cli(capsys, "simulate", "--system", "bouncing_ball", "--x0=-1,0")
    assert code == 2 and "outside" in err


def test_usage_errors(capsys):
    assert cli(capsys, "simulate", "--system", "no_such_file.json", "--x0", "1,0")[0] == 2
    assert cli(capsys, "simulate", "--system", "bouncing_ball", "--x0", "1,zero")[0] == 2
    assert cli(capsys, "simulate", "--system", "bouncing_ball", "--x0", "1,0,0")[0] == 2
    assert cli(capsys, "frobnicate")[0] == 2


def test_located_definition_error(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"dim": 2, "C": {"type": "all"}, "F": {"vertices": [["x3", "0"]]},
                             "D": {"type": "empty"}, "G": {"vertices": [["x1", "x2"]]}}))
    code, _, err = cli(capsys, "simulate", "--system", str(p), "--x0", "0,0")
    assert code == 2 and "/F/vertices/0" in err


def test_reach(capsys):
    code, out, _ = cli(capsys, "reach", "--system", "bouncing_ball", "--x0", "1,0", "--T", "1.4142135623730951")
    assert code == 0
    row = out.splitlines()[1].split(",")
    assert abs(float(row[0])) < 1e-6 and abs(float(row[1]) + 2 ** 0.5) < 1e-6


def test_reach_interval_json(capsys):
    code, out, _ = cli(capsys, "reach", "--system", "bouncing_ball", "--x0", "1,0", "--interval", "1.3", "1.5",
                       "--grid", "5", "--json")
    assert code == 0
    rep = json.loads(out)
    # grid 1.3, 1.35, ..., 1.5; the J = 0 part of the solution ends at sqrt(2)
    assert [m["T"] for m in rep["meta"]] == pytest.approx([1.3, 1.35, 1.4])


def test_check_oscillator_v_fails(capsys):
    code, _, _ = cli(capsys, "check-conditions", "--list", "V", "--system", "oscillator.json", "--expect", "fail")
    assert code == 0
    code, _, _ = cli(capsys, "check-conditions", "--list", "V", "--system", "oscillator.json", "--expect", "pass")
    assert code == 1


def test_check_json(capsys):
    code, out, _ = cli(capsys, "check-conditions", "--list", "V", "--system", "bouncing_ball",
                       "--points", "0,0;0,1", "--json")
    assert code == 0
    rep = json.loads(out)
    assert rep["summary"]["V2"] == "fail"
    assert [e["point"] for e in rep["entries"] if e["id"] == "V2"] == [[0.0, 0.0], [0.0, 1.0]]


def test_closeness(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli(capsys, "simulate", "--system", "bouncing_ball", "--x0", "1,0", "--T-max", "3",
               "--priority", "jump-first", "--out", str(a))[0] == 0
    assert cli(capsys, "simulate", "--system", "bouncing_ball", "--x0", "1.001,0", "--T-max", "3",
               "--priority", "jump-first", "--out", str(b))[0] == 0
    code, out, _ = cli(capsys, "closeness", "--arc", str(a), "--arc", str(b), "--tau", "3", "--eps", "0.05",
                       "--json", "--expect", "pass")
    assert code == 0
    assert json.loads(out)["close"] is True


def test_probe_isc_reports_hypothesis_failure(capsys):
    code, out, _ = cli(capsys, "probe", "--kind", "isc", "--system", "bouncing_ball.json", "--x0", "1,0",
                       "--T", "1.41421", "--J", "0", "--schedule", "0.2,0.1", "--json")
    assert code == 0
    rep = json.loads(out)
    assert rep["hypothesis"]["holds"] is False
    assert "inf" in rep["distances"]


def test_examples(capsys):
    code, out, _ = cli(capsys, "examples")
    assert code == 0 and "bouncing_ball" in out
    code, out, _ = cli(capsys, "examples", "dump", "thermostat")
    assert code == 0 and json.loads(out)["name"] == "thermostat"
    assert cli(capsys, "examples", "dump", "nothing")[0] == 2


def test_help_documents_flags(capsys):
    with pytest.raises(SystemExit):
        from hybridreach.cli import build_parser
        build_parser().parse_args(["probe", "--help"])
    out = capsys.readouterr().out
    for flag in ("--kind", "--schedule", "--deltas", "--eps", "--rho", "--seed", "--json", "--expect"):
        assert flag in out


def test_byte_identical_outputs(tmp_path):
    argv = [sys.executable, "-m", "hybridreach", "reach", "--system", "thermostat", "--x0-box", "1.2,0", "1.8,0",
            "--T", "0.5", "--J", "1", "--samples", "4", "--seed", "7"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b and len(a.splitlines()) > 4
