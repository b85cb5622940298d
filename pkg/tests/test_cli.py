import csv
import json
import subprocess
import sys

import pytest

import asep_lab.simulator as simulator
from asep_lab.cli import EXIT_IDENTITY, EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, EXIT_WINDOW, main


def _rows(path):
    return list(csv.DictReader(path.read_text().splitlines()))


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_exact_prob_t0(tmp_path, capsys):
    out = tmp_path / "ep"
    code = main(["--out-dir", str(out), "exact-prob", "--p", "0.3", "--q", "0.7", "--rho", "0.5",
                 "--m", "1", "--t", "0", "--x-min", "1", "--x-max", "5"])
    assert code == EXIT_OK
    rows = _rows(out / "exact_prob.csv")
    assert [int(r["x"]) for r in rows] == [1, 2, 3, 4, 5]
    for r in rows:
        assert abs(float(r["P(x_m(t)<=x)"]) - (1 - 0.5 ** int(r["x"]))) < 1e-8
    m = _manifest(out)
    assert m["exit_code"] == 0 and m["command"] == "exact-prob"
    assert m["parameters"]["rho"] == 0.5 and "numpy" in m["versions"]
    assert "x,P(x_m(t)<=x)" in capsys.readouterr().out


def test_exact_prob_rho_one_matches_step(tmp_path):
    out = tmp_path / "ep1"
    assert main(["--out-dir", str(out), "exact-prob", "--p", "0.3", "--q", "0.7", "--rho", "1",
                 "--m", "2", "--t", "1", "--x-min", "0", "--x-max", "2"]) == EXIT_OK
    from asep_lab.exact import prob_position_detail
    from asep_lab.model import ModelParams

    P = ModelParams(0.3, 0.7, 1.0)
    for r in _rows(out / "exact_prob.csv"):
        ref = prob_position_detail(2, int(r["x"]), 1.0, P, bernoulli_factor=False).value
        assert abs(float(r["P(x_m(t)<=x)"]) - ref) < 1e-10


def test_exact_prob_usage_errors(tmp_path, capsys):
    base = ["--out-dir", str(tmp_path), "exact-prob", "--p", "0.3", "--m", "1", "--t", "0", "--x-min", "1", "--x-max", "2"]
    assert main(base) == EXIT_USAGE
    assert main(base[:4] + ["--q", "0.6"] + base[4:]) == EXIT_USAGE
    assert main(["--out-dir", str(tmp_path)]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_exact_prob_nonconvergence(tmp_path):
    out = tmp_path / "nc"
    code = main(["--out-dir", str(out), "exact-prob", "--p", "0.3", "--q", "0.7", "--rho", "0.5",
                 "--m", "1", "--t", "1", "--x-min", "0", "--x-max", "0", "--tol", "1e-30",
                 "--max-xi-nodes", "128", "--max-lambda-nodes", "256"])
    assert code == EXIT_NONCONVERGED
    assert _manifest(out)["exit_code"] == EXIT_NONCONVERGED


def test_simulate_and_rerun(tmp_path):
    out = tmp_path / "sim"
    argv = ["--out-dir", str(out), "simulate", "--p", "0.3", "--q", "0.7", "--rho", "0.5",
            "--t", "10", "--trials", "300", "--seed", "4", "--m", "1,3", "--x=-2,0"]
    assert main(argv) == EXIT_OK
    m = _manifest(out)
    assert m["duality"]["exceptions"] == 0 and m["duality"]["pairs"] == 300 * 4
    first = {f: (out / f).read_text() for f in m["files"]}
    assert _rows(out / "position_m1.csv")[-1]["cum_prob"] == "1"
    assert main(["rerun", str(out / "manifest.json")]) == EXIT_OK
    assert {f: (out / f).read_text() for f in m["files"]} == first


def test_simulate_drift(tmp_path):
    # with p = 0 the leftmost particle never meets anything: x_1(t) = 1 - Poisson(q t)
    out = tmp_path / "drift"
    n = 4000
    assert main(["--out-dir", str(out), "simulate", "--p", "0", "--q", "1", "--rho", "1",
                 "--t", "5", "--trials", str(n), "--seed", "1", "--m", "1"]) == EXIT_OK
    rows = _rows(out / "position_m1.csv")
    mean = sum(int(r["value"]) * int(r["count"]) for r in rows) / n
    assert abs(mean - (1 - 5)) < 4 * (5 / n) ** 0.5


def test_simulate_window_violation(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(simulator, "light_cone_margin", lambda params, t_end: 0)
    code = main(["--out-dir", str(tmp_path), "simulate", "--p", "0.3", "--q", "0.7", "--rho", "0.5",
                 "--t", "50", "--trials", "50", "--m", "1"])
    assert code == EXIT_WINDOW
    assert "window" in capsys.readouterr().err


def test_limit_dist(tmp_path):
    out = tmp_path / "ld"
    assert main(["--out-dir", str(out), "limit-dist", "--law", "g", "--s-min", "-1", "--s-max", "1", "--step", "0.5"]) == EXIT_OK
    lines = (out / "limit_g.csv").read_text().splitlines()
    assert lines[0].startswith("# law=g")
    rows = list(csv.DictReader(lines[1:]))
    assert float(next(r for r in rows if float(r["s"]) == 0)["F"]) == 0.5
    out2 = tmp_path / "ld2"
    for n, d in ((40, out2 / "a"), (80, out2 / "b")):
        assert main(["--out-dir", str(d), "limit-dist", "--law", "f2", "--s-min", "-4", "--s-max", "2", "--step", "1", "--nquad", str(n)]) == EXIT_OK
    a = list(csv.DictReader((out2 / "a" / "limit_f2.csv").read_text().splitlines()[1:]))
    b = list(csv.DictReader((out2 / "b" / "limit_f2.csv").read_text().splitlines()[1:]))
    vals = [float(r["F"]) for r in b]
    assert vals == sorted(vals)
    assert max(abs(float(x["F"]) - float(y["F"])) for x, y in zip(a, b)) < 1e-10
    assert main(["--out-dir", str(out), "limit-dist", "--law", "f3"]) == EXIT_USAGE


def test_verify_identities(tmp_path):
    out = tmp_path / "vi"
    assert main(["--out-dir", str(out), "verify-identities", "--kmax", "3", "--points-per-k", "4"]) == EXIT_OK
    rep = json.loads((out / "identities.json").read_text())
    assert rep["failures"] == 0 and rep["negative_control_detected"]
    assert main(["--out-dir", str(out), "verify-identities", "--kmax", "1"]) == EXIT_OK
    assert main(["--out-dir", str(out), "verify-identities", "--kmax", "3", "--points-per-k", "2", "--perturb-tau", "1/97"]) == EXIT_IDENTITY
    assert main(["--out-dir", str(out), "verify-identities", "--kmax", "7"]) == EXIT_USAGE


def test_converge(tmp_path):
    out = tmp_path / "cv"
    assert main(["--out-dir", str(out), "converge", "--rho", "1", "--sigma", "0.25", "--t-list", "20,40",
                 "--trials", "200", "--seed", "3"]) == EXIT_OK
    rows = _rows(out / "convergence.csv")
    assert [r["law"] for r in rows] == ["f2", "f2"] and rows[0]["regime"] == "tw2"
    m = _manifest(out)
    assert m["report"]["plan"]["seed_root"] == 3
    out2 = tmp_path / "cv2"
    assert main(["--out-dir", str(out2), "converge", "--rho", "0.5", "--sigma", "0.25", "--regime", "critical",
                 "--t-list", "20", "--trials", "100"]) == EXIT_OK
    assert _rows(out2 / "convergence.csv")[0]["law"] == "f1sq"
    assert main(["--out-dir", str(out), "converge", "--sigma", "-0.5", "--t-list", "20"]) == EXIT_USAGE
    assert main(["--out-dir", str(out), "converge", "--rho", "0.5", "--sigma", "0.5", "--regime", "tw2", "--t-list", "20"]) == EXIT_USAGE


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "asep_lab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
