import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from rtgauge.cli import ConfigError, check_suite, clustering_subsequence, load_config, main


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_solve_zero_connection(tmp_path):
    code, out = run(tmp_path, "solve", "--set", "field.amplitude=0", "--set", "grid.shape=17")
    assert code == 0
    s = summary(out)
    assert s["status"] == "pass"
    assert s["report"]["iterations"] == 2 and s["report"]["residual_rt2"] == 0.0
    rows = list(csv.reader((out / "trace.csv").open()))
    assert rows[0] == ["k", "v_norm", "diff_norm", "contraction", "rt2_residual", "w_norm", "det_defect"]
    assert rows[1][0] == "2"


def test_solve_smooth_noncompact(tmp_path):
    code, out = run(tmp_path, "solve", "--set", 'rt.sig={"r":1,"s":1}', "--set", "grid.shape=17")
    assert code == 0
    s = summary(out)
    assert s["config"]["rt"]["sig"] == {"r": 1, "s": 1}
    assert s["report"]["w_norm"] <= 1e-8 and s["report"]["det_defect"] <= 1e-8


def test_reports_are_byte_identical(tmp_path):
    args = ("solve", "--set", "grid.shape=17", "--seed", "3")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    for f in ("summary.json", "trace.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_csv_uses_17_significant_digits(tmp_path):
    _, out = run(tmp_path, "solve", "--set", "grid.shape=17")
    rows = list(csv.reader((out / "trace.csv").open()))
    v = rows[2][1]
    assert float(v) == float(f"{float(v):.17g}")
    assert len(v.replace(".", "").replace("-", "").split("e")[0].lstrip("0")) >= 15


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"n": 2, "shape": 17}, "field": {"kind": "constant", "amplitude": 0.2}}))
    code, out = run(tmp_path, "solve", "--config", str(cfg), "--set", "rt.epsilon=0.25", "--threads", "4")
    assert code == 0
    s = summary(out)
    assert s["config"]["rt"]["epsilon"] == 0.25 and s["config"]["threads"] == 4
    assert s["config"]["field"]["kind"] == "constant"


@pytest.mark.parametrize("args", [
    ("solve", "--set", "rt.p=-1"),
    ("solve", "--set", "grid.n=4"),
    ("solve", "--set", "rt.epsilon=1.5"),
    ("solve", "--set", "unknown=1"),
    ("solve", "--set", "novalue"),
    ("solve", "--set", "rt.p=1", "--set", "grid.n=2"),
    ("solve", "--set", 'field.sig={"r":1,"s":1}'),
    ("solve", "--seed", "-1"),
    ("bogus",),
    (),
])
def test_config_errors_exit_2(tmp_path, args, capsys):
    assert main([*args, "--out", str(tmp_path / "x")]) == 2


def test_malformed_json_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "cannot read config" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        load_config(bad)


def test_divergence_exits_1(tmp_path, capsys):
    code, out = run(tmp_path, "solve", "--set", "grid.shape=17", "--set", "field.amplitude=20",
                    "--set", "rt.epsilon=0.9")
    assert code == 1
    s = summary(out)
    assert s["status"] == "diverged" and "lower epsilon" in s["error"]
    assert "error:" in capsys.readouterr().err


def test_auto_epsilon(tmp_path):
    code, out = run(tmp_path, "solve", "--set", "grid.shape=17", "--set", "field.amplitude=10",
                    "--set", "rt.auto_epsilon=true")
    assert code == 0
    assert summary(out)["report"]["epsilon"] < 0.5


def test_regularity_with_kink(tmp_path):
    code, out = run(tmp_path, "regularity", "--set", "field.kind=kink", "--set", "field.amplitude=0.3",
                    "--set", "field.seed=3",
                    "--set", 'field.parameters={"background": {"kind": "smooth_bump", "amplitude": 0.1, "seed": 3}}')
    assert code == 0
    s = summary(out)
    assert 0.55 <= s["input"]["growth_exponent"] <= 0.95
    assert s["output"]["growth_exponent"] <= 0.2
    rows = list(csv.reader((out / "smoothness.csv").open()))
    assert rows[0] == ["mode", "level", "h", "shape", "a_l2p", "grad_lp", "da_lp", "local_slope"]
    assert len(rows) == 7


def test_sweep_and_spectrum(tmp_path):
    code, out = run(tmp_path, "sweep-lambda", "--set", "grid.shape=17")
    assert code == 0 and max(summary(out)["sweep"]["w_norms"]) <= 1e-8
    code, out = run(tmp_path, "spectrum", "--set", "grid.shape=17", "--set", "spectrum.count=3")
    assert code == 0
    rows = list(csv.reader((out / "spectrum.csv").open()))
    assert rows[0] == ["index", "real", "imag", "abs"] and len(rows) == 4


def test_compactness_small(tmp_path):
    code, out = run(tmp_path, "compactness", "--set", "grid.shape=17", "--set", "compactness.count=3")
    assert code == 0
    res = summary(out)["compactness"]
    assert len(res["members"]) == 3 and len(res["distances"]) == 3
    assert sorted(res["subsequence"]) == sorted(set(res["subsequence"]))


def test_clustering_subsequence_monotone():
    rng = np.random.default_rng(0)
    P = rng.standard_normal((9, 3))
    D = np.linalg.norm(P[:, None] - P[None], axis=-1)
    chain = clustering_subsequence(D)
    steps = [D[a, b] for a, b in zip(chain, chain[1:])]
    assert len(chain) >= 2 and len(set(chain)) == len(chain)
    assert all(x >= y for x, y in zip(steps, steps[1:]))
    assert steps[-1] == D[D > 0].min()


def test_check_fast_passes_quickly(tmp_path, capsys):
    t0 = time.perf_counter()
    code, out = run(tmp_path, "check")
    assert time.perf_counter() - t0 < 10.0
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert all(r["pass"] for r in summary(out)["contracts"])


def test_check_suite_full_and_bad_level():
    rows = check_suite("full")
    assert {r["name"] for r in rows} >= {"d_squared_zero", "adjointness", "rt2_residual", "spectrum_zero"}
    assert all(r["pass"] for r in rows)
    with pytest.raises(ValueError):
        check_suite("medium")


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rtgauge.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "rtgauge" in r.stdout
