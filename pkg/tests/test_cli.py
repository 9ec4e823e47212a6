import csv
import json

import pytest

from mprktune.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_summary_and_csv(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "solve", "--problem", "robertson", "--scheme", "mprk22:1", "--tol", "1e-4",
                       "--controller", "2,-1,0,-1,1", "--csv", str(path))
    assert code == 0
    s = json.loads(out)
    assert s["positive"] is True and s["aborted"] is None
    assert s["err"] <= 1e-3 and s["K"] == s["S"]
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "y1", "y2", "y3", "dt", "accepted"]
    assert len(rows) - 2 == s["S"] + s["R"]
    assert sum(int(r[-1]) for r in rows[2:]) == s["S"]


def test_unknown_problem_lists_names(capsys):
    code, _, err = run(capsys, "solve", "--problem", "lorenz")
    assert code == 2
    for name in ("pr4", "robertson", "hires", "npzd", "brusselator"):
        assert name in err


@pytest.mark.parametrize("tol", ["0", "-1e-3", "nan", "abc"])
def test_bad_tolerance(capsys, tol):
    code, _, err = run(capsys, "solve", "--problem", "npzd", f"--tol={tol}")
    assert code == 2 and "tolerance" in err


def test_infeasible_scheme_and_controller(capsys):
    assert run(capsys, "solve", "--problem", "npzd", "--scheme", "mprk43ab:0.5,0.9")[0] == 2
    assert run(capsys, "solve", "--problem", "npzd", "--controller", "1,2")[0] == 2


def test_argparse_errors_exit_2(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys)[0] == 2


def test_wp_rows(capsys, tmp_path):
    out_csv = tmp_path / "wp.csv"
    svg = tmp_path / "wp.svg"
    code, _, _ = run(capsys, "wp", "--problem", "npzd", "--scheme", "mprk22:1",
                     "--controller", "2,-1,0,-1,1", "--out", str(out_csv), "--svg", str(svg))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert [float(r["tol"]) for r in rows] == [10.0 ** -j for j in range(1, 9)]
    errs = [float(r["err"]) for r in rows]
    tail = errs[1:]
    assert all(a > b for a, b in zip(tail, tail[1:]))
    assert all(int(r["total"]) == int(r["S"]) + int(r["R"]) for r in rows)
    text = svg.read_text()
    assert text.startswith("<svg") and text.count("<circle") == 8 + 1


def test_wp_marks_aborted_runs(capsys, tmp_path):
    out_csv = tmp_path / "wp.csv"
    svg = tmp_path / "wp.svg"
    code, _, _ = run(capsys, "wp", "--problem", "npzd", "--controller", "0.2,0,0,-3,1",
                     "--tols", "1e-3,1e-10", "--out", str(out_csv), "--svg", str(svg))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert rows[1]["aborted"] == "DtUnderflow"
    assert 'fill="none"' in svg.read_text()


def test_wp_rejects_empty_tolerance_list(capsys):
    assert run(capsys, "wp", "--problem", "npzd", "--tols", ",")[0] == 2


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"problem": "npzd", "tol": 1e-3, "scheme": "mprk43g:0.563"}))
    code, out, _ = run(capsys, "--config", str(cfg), "solve", "--tol", "1e-5")
    assert code == 0
    s = json.loads(out)
    assert (s["problem"], s["tol"], s["scheme"]) == ("npzd", 1e-5, "mprk43g:0.563")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert run(capsys, "--config", str(bad), "solve")[0] == 2


def test_solve_is_byte_identical(capsys, tmp_path):
    outs = []
    for n in range(2):
        p = tmp_path / f"t{n}.csv"
        code, out, _ = run(capsys, "solve", "--problem", "npzd", "--tol", "1e-4", "--csv", str(p))
        outs.append((out, p.read_bytes()))
    assert outs[0] == outs[1]


def test_reference_command(capsys, tmp_path):
    d = str(tmp_path)
    code, out, _ = run(capsys, "--cache-dir", d, "reference", "--problem", "npzd", "--ref-tol", "1e-9")
    first = json.loads(out)["entries"][0]
    assert code == 0 and first["cached"] is False and first["kind"] == "trajectory"
    code, out, _ = run(capsys, "--cache-dir", d, "reference", "--problem", "npzd", "--ref-tol", "1e-9")
    assert json.loads(out)["entries"][0]["cached"] is True
    code, out, _ = run(capsys, "--cache-dir", d, "reference", "--problem", "npzd", "--ref-tol", "1e-10")
    other = json.loads(out)["entries"][0]
    assert other["path"] != first["path"] and other["cached"] is False
    code, out, _ = run(capsys, "--cache-dir", d, "reference", "--problem", "pr4")
    assert json.loads(out)["entries"] == [{"kind": "analytic", "problem": "pr4_0.4"}]


def test_reference_all(capsys):
    code, out, _ = run(capsys, "reference", "--all")
    entries = json.loads(out)["entries"]
    assert code == 0 and len(entries) == 5
    assert [e["kind"] for e in entries] == ["analytic"] + ["trajectory"] * 4
    assert all(e.get("cached", True) for e in entries)


def test_schema_is_json(capsys):
    code, out, _ = run(capsys, "schema")
    doc = json.loads(out)
    assert code == 0 and doc["wp"]["csv_columns"] == ["tol", "err", "S", "R", "total", "aborted"]


def test_tune_budget_validation(capsys):
    assert run(capsys, "tune", "--budget", "5,0")[0] == 2
    assert run(capsys, "tune", "--budget", "x")[0] == 2


def test_cost_command(capsys, tmp_path):
    out = tmp_path / "c.json"
    code, _, _ = run(capsys, "cost", "--scheme", "mprk43g:0.563", "--controller", "2,-1,0,-1,1",
                     "--controller", "1,0,0,0,1", "--out", str(out))
    doc = json.loads(out.read_text())
    assert code == 0 and len(doc["results"]) == 2
    assert doc["results"][0]["params"] == [2.0, -1.0, 0.0, -1.0, 1]
    assert all(r["total"] < 10 for r in doc["results"])
