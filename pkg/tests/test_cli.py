import csv
import io
import json
import math
import subprocess
import sys

import pytest

from mmrw.cli import fmt, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_fmt():
    assert fmt(1.0) == "1.0"
    assert fmt(2 * math.log(3)) == "2.1972245773362196"
    assert fmt(True) == "true"
    assert fmt(3) == "3"
    assert fmt(float("inf")) == "inf"


def test_chi_origin(capsys, models_dir):
    code, out, err = run(capsys, "chi", "--model", str(models_dir / "r1.json"), "--theta", "0,0")
    assert code == 0 and out == "1.0\n"
    assert err.startswith("# mmrw chi ")
    assert "theta=0.0,0.0" in err


def test_negative_theta(capsys):
    code, out, _ = run(capsys, "domain", "--model", "R1", "--theta", "-5,-5")
    assert code == 0 and out == "true\n"


def test_decay_rate_output(capsys, models_dir):
    code, out, _ = run(capsys, "decay-rate", "--model", str(models_dir / "r1.json"), "--c", "1,1")
    rate, arg = out.splitlines()
    assert code == 0
    assert rate.startswith("2.1972245")
    t1, t2 = (float(v) for v in arg.split(","))
    assert t1 == pytest.approx(1.0986123, abs=1e-6) and t2 == pytest.approx(1.0986123, abs=1e-6)


def test_decay_rate_json(capsys):
    code, out, _ = run(capsys, "decay-rate", "--model", "R1", "--c", "1,1", "--json")
    doc = json.loads(out)
    assert doc["rate"] == pytest.approx(2 * math.log(3), abs=1e-8)
    assert doc["flat_segment"] is False


def test_validate_r0(capsys, models_dir):
    code, out, _ = run(capsys, "validate", "--model", str(models_dir / "r0.json"))
    assert code == 0
    assert "p_plus_irreducible_hint=false" in out.splitlines()


def test_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"s0": 1, "blocks": {"0,0": [["0.9"]]}}')
    assert run(capsys, "chi", "--model", str(bad), "--theta", "0,0")[0] == 2
    assert run(capsys, "chi", "--model", str(tmp_path / "missing.json"), "--theta", "0,0")[0] == 2
    assert run(capsys, "marginal-decay", "--model", "R1", "--c", "2,2")[0] == 2
    up = tmp_path / "up.json"
    up.write_text('{"s0": 1, "blocks": {"1,0": [["0.4"]], "0,1": [["0.4"]], "0,0": [["0.2"]]}}')
    code, _, err = run(capsys, "decay-rate", "--model", str(up), "--c", "1,1")
    assert code == 2 and "a1<0 or a2<0" in err
    # R0 never moves up, so the region is unbounded: a numerical failure
    assert run(capsys, "decay-rate", "--model", "R0", "--c", "1,1")[0] == 1


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        main(["chi", "--model", "R1", "--theta", "0,0", "--bogus", "1"])
    assert info.value.code == 2


@pytest.mark.parametrize("argv, header", [
    (["gamma-boundary", "--model", "R1", "--points", "5"], "theta1,zeta_lower,zeta_upper"),
    (["extreme-points", "--model", "R1"], "point,theta1,theta2"),
    (["occupation", "--model", "R0", "--origin", "2,3,1", "--L", "5"], "x1p,x2p,jp,value"),
    (["simulate", "--model", "R1", "--paths", "500", "--L", "8"], "x1p,x2p,jp,mean,half_width"),
    (["empirical-decay", "--model", "R1", "--c", "1,1"], "k,ratio"),
    (["cp-curve", "--model", "R1", "--K", "4,6"], "K,log_cp,iterations,residual"),
    (["mgf", "--model", "R2", "--theta", "-1,-1", "--L", "10"], "j1,j2"),
    (["rate-matrix", "--model", "R1", "--K", "3"], "c0,c1,c2,c3"),
])
def test_csv_headers(capsys, argv, header):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert ",".join(rows[0]) == header
    assert len(rows) > 1


def test_occupation_r0_rows(capsys):
    _, out, _ = run(capsys, "occupation", "--model", "R0", "--origin", "2,3,1", "--L", "5")
    assert out.splitlines()[1:] == ["0,1,1,1.0", "1,2,1,1.0", "2,3,1,1.0"]


def test_json_mirrors_csv(capsys):
    _, out, _ = run(capsys, "cp-curve", "--model", "R1", "--K", "4,6", "--json")
    doc = json.loads(out)
    assert doc["columns"] == ["K", "log_cp", "iterations", "residual"]
    assert [r[0] for r in doc["rows"]] == [4, 6]


def test_out_file(capsys, tmp_path):
    target = tmp_path / "b.csv"
    code, out, _ = run(capsys, "gamma-boundary", "--model", "R1", "--points", "4", "--out", str(target))
    assert code == 0 and out == ""
    assert target.read_text().splitlines()[0] == "theta1,zeta_lower,zeta_upper"


def test_expand_roundtrip(capsys, tmp_path):
    code, out, _ = run(capsys, "expand", "--model", "R1", "--c", "2,3")
    assert code == 0
    path = tmp_path / "ex.json"
    path.write_text(out)
    assert run(capsys, "validate", "--model", str(path))[0] == 0


def test_residual_and_marginal(capsys):
    code, out, _ = run(capsys, "residual", "--model", "R1", "--theta", "-0.5,-0.5", "--L", "40")
    assert code == 0 and float(out) <= 1e-8
    code, out, _ = run(capsys, "marginal-decay", "--model", "R1", "--c", "1,1")
    assert float(out) == pytest.approx(math.log(3), abs=1e-10)


def test_byte_identical_runs():
    argv = [sys.executable, "-m", "mmrw", "simulate", "--model", "R2", "--paths", "3000",
            "--seed", "9", "--L", "10"]
    a = subprocess.run(argv, capture_output=True, check=True)
    b = subprocess.run(argv, capture_output=True, check=True)
    assert a.stdout == b.stdout and a.stdout
    argv = [sys.executable, "-m", "mmrw", "gamma-boundary", "--model", "R2", "--points", "9"]
    assert subprocess.run(argv, capture_output=True).stdout == subprocess.run(argv, capture_output=True).stdout


def test_help_documents_columns():
    out = subprocess.run([sys.executable, "-m", "mmrw", "occupation", "--help"],
                         capture_output=True, text=True, check=True).stdout
    assert "x1p,x2p,jp,value" in out
