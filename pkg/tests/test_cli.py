"""End-to-end command line tests (subprocess, CSV outputs, exit codes)."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

TINY_SIM_CONFIG = {
    "design": {"kind": "iid_gaussian", "n": 40, "p": 40},
    "coefficients": {"kind": "equal", "magnitude": 10.0, "k": 5},
    "sigma": 0.25,
    "replicates": 3,
    "seed": 3,
    "tpp_grid": [0.3, 0.6],
}

TINY_RANK_CONFIG = {
    "design": {"kind": "iid_gaussian", "n": 40, "p": 40},
    "coefficients": {"kind": "linear", "k": 2},
    "sigma": 0.0,
    "replicates": 2,
    "seed": 4,
    "mode": "rank",
    "sweep_param": "k",
    "sweep_values": [2, 3],
}


def run_cli(args, outdir=None):
    env = dict(os.environ)
    if outdir is not None:
        env["LASSOCRESCENT_OUTDIR"] = str(outdir)
    return subprocess.run(
        [sys.executable, "-m", "lassocrescent.cli"] + args,
        capture_output=True,
        text=True,
        env=env,
    )


def read_table(path):
    """(header_json, column_names, rows as list of string lists)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    assert lines[0].startswith("# lassocrescent ")
    assert lines[1].startswith("# config: ")
    header = json.loads(lines[1][len("# config: "):])
    columns = lines[2].split(",")
    rows = [ln.split(",") for ln in lines[3:] if ln]
    return header, columns, rows


def test_boundary_table(tmp_path):
    out = tmp_path / "b.csv"
    res = run_cli(
        ["boundary", "--delta", "1", "--epsilon", "0.2", "--n-points", "9", "--out", str(out)]
    )
    assert res.returncode == 0, res.stderr
    assert str(out) in res.stdout
    header, columns, rows = read_table(out)
    assert columns == ["u", "t_delta", "q_delta", "varsigma", "t_nabla", "q_nabla"]
    assert header["delta"] == 1 and header["epsilon"] == 0.2
    assert len(rows) == 9
    us = [float(r[0]) for r in rows]
    assert us == pytest.approx([j / 10.0 for j in range(1, 10)])
    qd = [float(r[2]) for r in rows]
    qn = [float(r[5]) for r in rows]
    assert all(a < b for a, b in zip(qd, qn))
    assert np.all(np.diff(qd) > 0) and np.all(np.diff(qn) > 0)
    mid = rows[4]
    assert float(mid[2]) == pytest.approx(0.020880859607870447, abs=1e-10)
    assert float(mid[5]) == pytest.approx(0.0781731750932415, abs=1e-10)


def test_boundary_truncation_note(tmp_path):
    out = tmp_path / "t.csv"
    res = run_cli(
        [
            "boundary",
            "--delta", "0.3",
            "--epsilon", "0.25",
            "--n-points", "9",
            "--out", str(out),
        ]
    )
    assert res.returncode == 0, res.stderr
    assert "phase" in res.stderr
    header, _, rows = read_table(out)
    assert "feasible_u" in header
    assert 0 < len(rows) < 9
    assert float(rows[-1][0]) == pytest.approx(0.5)


def test_boundary_rejects_noise(tmp_path):
    res = run_cli(
        ["boundary", "--delta", "1", "--epsilon", "0.2", "--sigma", "0.1"], outdir=tmp_path
    )
    assert res.returncode == 2
    assert "noiseless" in res.stderr


def test_boundary_infeasible_exit_code(tmp_path):
    res = run_cli(
        ["boundary", "--delta", "0.05", "--epsilon", "0.9", "--n-points", "1"],
        outdir=tmp_path,
    )
    assert res.returncode == 3
    assert "infeasible" in res.stderr


def test_boundary_touching_output(tmp_path):
    out = tmp_path / "b.csv"
    res = run_cli(
        [
            "boundary",
            "--delta", "1",
            "--epsilon", "0.2",
            "--n-points", "4",
            "--touching", "0.5,0.5",
            "--out", str(out),
        ]
    )
    assert res.returncode == 0, res.stderr
    tp_path = str(out) + ".touching.csv"
    assert tp_path in res.stdout
    header, columns, rows = read_table(tp_path)
    assert columns == ["u", "q_delta"]
    assert header["touching_gamma"] == [0.5, 0.5]
    assert len(rows) == 2
    assert float(rows[0][0]) == pytest.approx(0.5013526118013145, abs=1e-6)
    assert float(rows[1][0]) == 1.0


def test_curve_matches_upper_edge(tmp_path):
    out = tmp_path / "c.csv"
    res = run_cli(
        [
            "curve",
            "--delta", "1",
            "--epsilon", "0.2",
            "--prior", '{"kind": "homogeneous", "epsilon": 0.2, "magnitude": 1}',
            "--n-points", "5",
            "--out", str(out),
        ]
    )
    assert res.returncode == 0, res.stderr
    header, columns, rows = read_table(out)
    assert columns == ["alpha", "lambda", "tau", "tpp_inf", "fdp_inf"]
    assert header["prior"]["values"] == [1.0]
    assert len(rows) == 5
    tpps = [float(r[3]) for r in rows]
    fdps = [float(r[4]) for r in rows]
    assert np.all(np.diff(tpps) > 0)
    assert np.all(np.diff(fdps) > 0)
    # middle grid point lands on TPP = 0.5; a single-magnitude noiseless
    # prior sits exactly on the upper edge there
    assert tpps[2] == pytest.approx(0.5, abs=1e-9)
    assert fdps[2] == pytest.approx(0.0781731750932415, abs=1e-6)


def test_curve_requires_valid_prior(tmp_path):
    res = run_cli(
        ["curve", "--delta", "1", "--epsilon", "0.2"], outdir=tmp_path
    )
    assert res.returncode == 2
    assert "prior" in res.stderr

    res_bad = run_cli(
        [
            "curve",
            "--delta", "1",
            "--epsilon", "0.2",
            "--prior", '{"kind": "homogeneous", "epsilon": 0.0, "magnitude": 1}',
        ],
        outdir=tmp_path,
    )
    assert res_bad.returncode == 2


def test_path_table_deterministic(tmp_path):
    cfg = json.dumps(TINY_SIM_CONFIG)
    out1 = tmp_path / "p1.csv"
    out2 = tmp_path / "p2.csv"
    res1 = run_cli(["path", "--config", cfg, "--replicate", "1", "--out", str(out1)])
    res2 = run_cli(["path", "--config", cfg, "--replicate", "1", "--out", str(out2)])
    assert res1.returncode == 0, res1.stderr
    assert res2.returncode == 0
    header, columns, rows = read_table(out1)
    assert columns == ["event_index", "lambda", "kind", "variable", "n_active", "tpp", "fdp"]
    assert header["replicate"] == 1
    lams = [float(r[1]) for r in rows]
    assert np.all(np.diff(lams) < 0)
    assert set(r[2] for r in rows) <= {"add", "drop"}
    assert all(int(r[4]) >= 1 for r in rows)
    # identical bytes on rerun: the replicate stream is counter-based
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_deterministic_and_jobs_invariant(tmp_path):
    cfg = json.dumps(TINY_SIM_CONFIG)
    outs = [tmp_path / f"s{i}.csv" for i in range(3)]
    res1 = run_cli(["simulate", "--config", cfg, "--out", str(outs[0])])
    res2 = run_cli(["simulate", "--config", cfg, "--out", str(outs[1])])
    res3 = run_cli(["simulate", "--config", cfg, "--jobs", "2", "--out", str(outs[2])])
    for res in (res1, res2, res3):
        assert res.returncode == 0, res.stderr
    header, columns, rows = read_table(outs[0])
    assert columns == ["tpp_grid", "mean_fdp", "se_fdp", "n_ok"]
    assert len(rows) == 2
    assert all(int(r[3]) == 3 for r in rows)
    body = lambda p: p.read_bytes()
    assert body(outs[0]) == body(outs[1])
    # worker count must not change the numbers
    assert body(outs[0]) == body(outs[2])


def test_rank_table(tmp_path):
    cfg = json.dumps(TINY_RANK_CONFIG)
    out = tmp_path / "r.csv"
    res = run_cli(["rank", "--config", cfg, "--out", str(out)])
    assert res.returncode == 0, res.stderr
    header, columns, rows = read_table(out)
    assert columns == ["sweep_value", "mean_T", "median_T", "q10", "q90", "n_censored"]
    assert [float(r[0]) for r in rows] == [2.0, 3.0]
    for r in rows:
        assert 1.0 <= float(r[1])
        assert int(r[5]) >= 0


def test_gnuplot_script(tmp_path):
    out = tmp_path / "b.csv"
    res = run_cli(
        [
            "boundary",
            "--delta", "1",
            "--epsilon", "0.2",
            "--n-points", "2",
            "--gnuplot",
            "--out", str(out),
        ]
    )
    assert res.returncode == 0, res.stderr
    gp = str(out) + ".gp"
    assert gp in res.stdout
    body = open(gp).read()
    assert "set datafile separator ','" in body
    assert str(out) in body


def test_outdir_environment_default(tmp_path):
    nested = tmp_path / "results" / "run1"
    res = run_cli(
        ["boundary", "--delta", "1", "--epsilon", "0.2", "--n-points", "2"],
        outdir=nested,
    )
    assert res.returncode == 0, res.stderr
    expected = nested / "boundary.csv"
    assert expected.exists()
    assert str(expected) in res.stdout


def test_malformed_config_exit_code(tmp_path):
    res = run_cli(["simulate", "--config", "{not json"], outdir=tmp_path)
    assert res.returncode == 2
    res_missing = run_cli(["simulate"], outdir=tmp_path)
    assert res_missing.returncode == 2
