import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from aapn import bench
from aapn.bench import ManifestError, SweepRow, parse_manifest, run_sweep
from aapn.cli import main
from aapn.problems import ProblemSpec
from aapn.solvers import SolverConfig

GOLDEN = Path(__file__).parent / "golden"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- manifests

def test_parse_whitespace_table():
    rows = parse_manifest("""
        # sweep
        re    method m beta n
        1000  pn     0 1    8
        2500  aapn   5 0.9  16   # trailing comment
    """)
    assert rows == [SweepRow(1000.0, "pn", 0, 1.0, 8), SweepRow(2500.0, "aapn", 5, 0.9, 16)]


def test_parse_csv_and_json():
    csv_rows = parse_manifest("Re,method,m,beta,n,tol\n100,aapn,1,1,4,1e-8\n")
    assert csv_rows[0].tol == 1e-8 and csv_rows[0].re == 100.0
    js = json.dumps({"runs": [{"re": 100, "method": "prtx", "m": 1, "beta": 1, "n": 4}]})
    assert parse_manifest(js)[0].method == "prtx"
    assert parse_manifest(json.dumps([])) == []


@pytest.mark.parametrize("text", [
    "re method m beta n\n1000 pn 0 0 8\n",            # beta = 0
    "re method m beta n\n1000 pn 0 1.5 8\n",          # beta > 1
    "re method m beta n\n1000 pn 0 1\n",              # short row
    "re method m beta\n1000 pn 0 1\n",                # missing column
    "re method m beta n speed\n1000 pn 0 1 8 3\n",    # unknown column
    "re method m beta n\n1000 secant 0 1 8\n",        # unknown method
    "re method m beta n\nabc pn 0 1 8\n",             # bad number
])
def test_parse_rejects(text):
    with pytest.raises(ManifestError):
        parse_manifest(text)


def test_empty_manifest_empty_table(tmp_path):
    manifest = tmp_path / "empty.txt"
    manifest.write_text("# nothing to run\n")
    out = tmp_path / "out.csv"
    assert main(["sweep", str(manifest), "--out", str(out)]) == 0
    assert read_csv(out) == []
    assert out.read_text().splitlines()[0].split(",")[0] == "row"


def test_sweep_rows_and_status_codes(tmp_path):
    rows = [
        SweepRow(1.0, "picard", 0, 1.0, 4),
        SweepRow(1000.0, "picard", 0, 1.0, 8, max_iterations=3),
        SweepRow(5000.0, "newton", 0, 1.0, 8),
    ]
    out = tmp_path / "sweep.csv"
    results = run_sweep(rows, out)
    table = read_csv(out)
    assert [r["result"] for r in table] == ["6", "F", "B"]
    assert [r["row"] for r in table] == ["0", "1", "2"]
    assert len(results) == 3


def test_sweep_parallel_matches_serial(tmp_path):
    rows = [SweepRow(re, "aapn", 1, 1.0, 4) for re in (1.0, 50.0, 200.0)]
    serial = run_sweep(rows, tmp_path / "a.csv", jobs=1)
    parallel = run_sweep(rows, tmp_path / "b.csv", jobs=2)
    by_row = {r["row"]: r for r in parallel}
    for r in serial:
        assert by_row[r["row"]]["result"] == r["result"]
        assert by_row[r["row"]]["final_residual"] == r["final_residual"]


def test_sweep_survives_failing_row(tmp_path, monkeypatch):
    def boom(spec, config):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(bench, "run", boom)
    table = run_sweep([SweepRow(1.0, "pn", 0, 1.0, 2)], tmp_path / "x.csv")
    assert table[0]["result"] == "B" and "disk on fire" in table[0]["status"]


# ---------------------------------------------------------------- runs

def test_run_record_summary():
    rec = bench.run(ProblemSpec("cavity", 4, 0.01), SolverConfig(nu=0.01, method="aapn", m=2))
    s = rec.summary()
    assert set(s) == set(bench.SUMMARY_COLUMNS)
    assert s["result"] == str(s["iterations"])
    thetas = [r.theta for r in rec.result.trace if r.window > 0]
    assert s["median_theta"] == pytest.approx(float(np.median(thetas)))
    assert s["velocity_dofs"] == 2 * 81 and s["pressure_dofs"] == 25
    pn = bench.run(ProblemSpec("cavity", 4, 0.01), SolverConfig(nu=0.01, method="pn"))
    assert math.isnan(pn.median_theta)


def test_fmt_full_precision():
    assert bench.fmt(0.1) == "0.10000000000000001"
    assert float(bench.fmt(1 / 3)) == 1 / 3
    assert bench.fmt(7) == "7"


def test_trace_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["solve", "--re", "400", "--n", "8", "--m", "2", "--out", str(path)]) == 0
    keep = [c for c in bench.TRACE_COLUMNS if not c.startswith("t_")]
    ra, rb = read_csv(a), read_csv(b)
    assert [[r[c] for c in keep] for r in ra] == [[r[c] for c in keep] for r in rb]


def test_golden_cavity_trace(tmp_path):
    out = tmp_path / "trace.csv"
    code = main(["solve", "--re", "1000", "--n", "32", "--method", "aapn", "--m", "1",
                 "--beta", "1", "--tol", "1e-10", "--out", str(out)])
    assert code == 0
    got = read_csv(out)
    ref = read_csv(GOLDEN / "cavity_re1000_n32_aapn_m1.csv")
    assert list(got[0]) == list(bench.TRACE_COLUMNS)
    assert len(got) == len(ref)
    for g, r in zip(got, ref):
        assert g["k"] == r["k"]
        for col in ("res_tilde_hat", "res_tilde_u"):
            gv, rv = float(g[col]), float(r[col])
            if rv > 1e-9:
                assert gv == pytest.approx(rv, rel=1e-6)
            else:  # round-off floor
                assert gv <= 1e-9
        if float(r["res_tilde_u"]) > 1e-6:
            assert float(g["theta"]) == pytest.approx(float(r["theta"]), rel=1e-6)
        assert all(float(g[c]) >= 0 for c in ("t_picard", "t_anderson", "t_newton"))


# ---------------------------------------------------------------- CLI

def test_cli_exit_codes(tmp_path, capsys):
    assert main(["solve", "--re", "1", "--method", "picard", "--n", "8"]) == 0
    assert "converged" in capsys.readouterr().out
    assert main(["solve", "--re", "1000", "--n", "8", "--method", "picard", "--max-iters", "3"]) == 2
    assert main(["solve", "--re", "5000", "--n", "8", "--method", "newton"]) == 3
    assert main(["solve", "--beta", "0", "--n", "2"]) == 1
    assert main(["sweep", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o.csv")]) == 1
    with pytest.raises(SystemExit):
        main(["solve", "--method", "secant"])


def test_cli_re1_picard_within_ten(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["solve", "--re", "1", "--method", "picard", "--summary", str(out)]) == 0
    row = read_csv(out)[0]
    assert row["status"] == "converged" and int(row["iterations"]) <= 10


def test_cli_export_field(tmp_path):
    vtk = tmp_path / "field.vtk"
    assert main(["solve", "--re", "10", "--n", "4", "--method", "pn", "--export-field", str(vtk)]) == 0
    text = vtk.read_text()
    assert "POINTS 25 double" in text
    assert "VECTORS velocity double" in text and "SCALARS pressure double" in text
    lines = text.splitlines()
    start = lines.index("VECTORS velocity double") + 1
    lid_top = [float(v) for v in lines[start + 22].split()]  # vertex (2, 4): lid interior
    assert lid_top[:2] == [1.0, 0.0]


def test_cli_manufactured(tmp_path, capsys):
    out = tmp_path / "err.csv"
    assert main(["manufactured", "--n", "4", "8", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r["n"] for r in rows] == ["4", "8"]
    assert float(rows[1]["h1_order"]) > 1.7
    assert "h1 error" in capsys.readouterr().out


def test_cli_sweep_manifest(tmp_path):
    manifest = tmp_path / "m.txt"
    manifest.write_text("re method m beta n\n1 pn 0 1 4\n1 aapn 1 0.5 4\n")
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(manifest), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 and all(r["status"] == "converged" for r in rows)
