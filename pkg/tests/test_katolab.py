# tests/test_katolab.py
from __future__ import annotations

import csv
import json
import logging
import math

import numpy as np
import pytest

from errors import ConfigError
from funclib import sech
from grid import build_grid
from katolab import (
    _default_threads,
    _init_env,
    configure_logging,
    load_sampled_csv,
    main,
    parse_config,
)

KATO = {
    "g": {"type": "tanh_mixture", "atoms": [{"scale": 1.0}]},
    "f": {"type": "tanh_mixture", "atoms": [{"scale": math.pi / 2}]},
    "grid": {"L": 20, "n": 401},
}
RANK_THREE_F = {
    "type": "tanh_mixture",
    "atoms": [{"scale": math.pi / 2}, {"scale": math.pi, "weight": 0.1}],
}


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def read_report(directory):
    return json.loads((directory / "report.json").read_text())


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def checks_by_name(report):
    return {c["name"]: c for c in report["checks"]}


# ---------------------------------------------------------------------
# run
# ---------------------------------------------------------------------
def test_run_spectrum(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path / "kato.json", {**KATO, "ops": ["spectrum"]})
    assert main(["run", "--config", config, "--out", str(out)]) == 0
    rows = read_rows(out / "eigenvalues.csv")
    assert len(rows) == 401
    assert float(rows[0]["eigenvalue"]) == pytest.approx(2.0 / math.pi, abs=1e-6)
    modes = read_rows(out / "modes.csv")
    assert len(modes) == 401
    assert {r["mode_index"] for r in modes} == {"0"}
    assert read_report(out)["passed"] is True


def test_run_even_node_count_is_invalid(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path / "bad.json", {**KATO, "grid": {"L": 20, "n": 400}})
    assert main(["run", "--config", config, "--out", str(out)]) == 2
    assert not out.exists()


@pytest.mark.parametrize("mutation", [
    {"extra": 1},
    {"grid": {"L": 20, "n": 401, "h": 0.1}},
    {"ops": [{"op": "spectrum", "colour": "red"}]},
    {"ops": ["nonexistent"]},
    {"g": {"type": "tanh_mixture", "atoms": [{"scale": 1.0, "width": 2}]}},
    {"g": {"type": "tanh_mixture", "atoms": [{"scale": 1.0, "weight": -1.0}]}},
    {"f": {"type": "polynomial"}},
    {"g": {"type": "tanh_mixture", "atoms": [{"scale": 1.0}], "offset": "x"}},
    {"grid": {"L": 20, "n": 100001}},
    {"out_dir": 5},
    {"ops": [{"op": "exp_moment", "s": "abc"}]},
    {"ops": [{"op": "herglotz", "levels": "8"}]},
    {"ops": [{"op": "spectrum", "side": "sideways"}]},
    {"ops": [{"op": "spectrum", "assert_positive": "yes"}]},
    {"ops": [{"op": "spectrum", "assert_rank": 1.5}]},
    {"ops": [{"op": "fit_measure", "function": "h"}]},
    {"ops": [{"op": "plancherel", "y": True}]},
])
def test_run_rejects_invalid_configs(tmp_path, mutation):
    out = tmp_path / "out"
    config = write_config(tmp_path / "bad.json", {**KATO, **mutation})
    assert main(["run", "--config", config, "--out", str(out)]) == 2
    assert not out.exists()


def test_run_without_grid_refuses_oversized_default(tmp_path):
    out = tmp_path / "out"
    slow = {"type": "tanh_mixture", "atoms": [{"scale": 0.001}]}
    payload = {"g": slow, "f": KATO["f"], "ops": ["spectrum"]}
    config = write_config(tmp_path / "slow.json", payload)
    assert main(["run", "--config", config, "--out", str(out)]) == 2
    assert not out.exists()


def test_run_missing_config_is_invalid(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_run_positivity_assertion_fails_on_rank_three(tmp_path):
    out = tmp_path / "out"
    payload = {**KATO, "f": RANK_THREE_F, "ops": [{"op": "spectrum", "assert_positive": True}]}
    config = write_config(tmp_path / "r3.json", payload)
    assert main(["run", "--config", config, "--out", str(out)]) == 1
    report = read_report(out)
    assert report["passed"] is False
    assert report["checks"][0]["rank"] == 3
    assert report["checks"][0]["min_eigenvalue"] < 0


def test_run_all_ops_on_kato_pair(tmp_path):
    out = tmp_path / "out"
    ops = [
        "spectrum",
        {"op": "spectrum", "side": "momentum", "assert_rank": 1},
        "diagonal_identity",
        {"op": "diagonal_identity", "side": "momentum"},
        "duality",
        {"op": "strip_product", "expect": math.pi / 2},
        {"op": "exp_moment", "function": "g", "s": 2.5, "expect_diverging": True},
        "herglotz",
        "fit_measure",
        "plancherel",
        "continuation_identity",
    ]
    config = write_config(tmp_path / "all.json", {**KATO, "ops": ops})
    assert main(["run", "--config", config, "--out", str(out)]) == 0
    report = read_report(out)
    assert all(c["passed"] is not False for c in report["checks"])
    measure = json.loads((out / "measure.json").read_text())
    assert measure["r_hat"] == pytest.approx(1.0)
    assert sum(a["m"] for a in measure["atoms"]) == pytest.approx(1.0, abs=1e-6)


def test_run_op_error_counts_as_failed_check(tmp_path):
    out = tmp_path / "out"
    payload = {**KATO, "ops": [{"op": "plancherel", "y": 2.0}]}
    config = write_config(tmp_path / "p.json", payload)
    assert main(["run", "--config", config, "--out", str(out)]) == 1
    check = read_report(out)["checks"][0]
    assert check["error"] == "domain_error"


def test_run_is_byte_reproducible(tmp_path):
    config = write_config(tmp_path / "kato.json", {**KATO, "ops": ["spectrum", "strip_product"]})
    for name in ("a", "b"):
        assert main(["run", "--config", config, "--out", str(tmp_path / name)]) == 0
    for name in ("eigenvalues.csv", "modes.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_dump_kernel(tmp_path):
    out = tmp_path / "out"
    payload = {**KATO, "grid": {"L": 5, "n": 11}}
    config = write_config(tmp_path / "k.json", payload)
    assert main(["run", "--config", config, "--out", str(out), "--dump-kernel"]) == 0
    rows = read_rows(out / "kernel_position.csv")
    assert len(rows) == 11 and len(rows[0]) == 22
    assert float(rows[5]["re5"]) == pytest.approx(1.0 / math.pi * build_grid(5, 11).weights[5])


def test_run_with_sampled_function(tmp_path):
    grid = build_grid(20.0, 401)
    x = grid.nodes
    table = np.column_stack((x, np.tanh(x), sech(x) ** 2))
    np.savetxt(tmp_path / "g.csv", table, delimiter=",", header="x,value,derivative",
               comments="", fmt="%.17g")
    payload = {
        "g": {"type": "sampled", "path": "g.csv"},
        "f": KATO["f"],
        "ops": ["spectrum", "diagonal_identity"],
    }
    out = tmp_path / "out"
    config = write_config(tmp_path / "sampled.json", payload)
    assert main(["run", "--config", config, "--out", str(out)]) == 0
    rows = read_rows(out / "eigenvalues.csv")
    assert float(rows[0]["eigenvalue"]) == pytest.approx(2.0 / math.pi, abs=1e-6)


def test_sampled_csv_needs_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n-1,0,0\n0,0,1\n1,0,0\n")
    with pytest.raises(ConfigError):
        load_sampled_csv(path)


def test_parse_config_defaults_to_scale_aware_grid():
    config = parse_config({key: KATO[key] for key in ("g", "f")})
    assert (config.grid.half_width, config.grid.n) == (20.0, 801)
    assert [op.name for op in config.ops] == ["spectrum"]


# ---------------------------------------------------------------------
# built-in experiments
# ---------------------------------------------------------------------
def test_rank_one_on_coarse_grid(tmp_path):
    assert main(["rank-one", "--out", str(tmp_path), "--L", "10", "--n", "51", "--relax", "100"]) == 0
    report = read_report(tmp_path)
    assert report["rank"] == 1 and report["passed"] is True


def test_rank_one_default_grid(tmp_path):
    assert main(["rank-one", "--out", str(tmp_path)]) == 0
    checks = checks_by_name(read_report(tmp_path))
    assert checks["top_eigenvalue"]["value"] == pytest.approx(2.0 / math.pi, abs=1e-6)
    assert checks["mode_overlap"]["value"] >= 0.99999


def test_rank_one_perturbed_scale(tmp_path):
    args = ["rank-one", "--L", "10", "--n", "101", "--f-scale", "1.6"]
    assert main([*args, "--out", str(tmp_path / "strict")]) == 1
    assert main([*args, "--out", str(tmp_path / "report"), "--report-only"]) == 0
    assert read_report(tmp_path / "report")["rank"] >= 2


def test_rank_three(tmp_path):
    assert main(["rank-three", "--out", str(tmp_path)]) == 0
    report = read_report(tmp_path)
    checks = checks_by_name(report)
    assert report["rank"] == 3
    assert checks["min_eigenvalue"]["value"] == pytest.approx(-0.018169, abs=1e-5)
    assert checks["quadratic_form"]["value"] == pytest.approx(-0.010371, abs=1e-5)
    assert abs(checks["sech_orthogonality"]["value"]) <= 1e-10
    assert checks["lambda_minus"]["value"] == pytest.approx(2.0 - math.pi, abs=1e-8)
    assert checks["lambda_plus"]["value"] == pytest.approx(2.0 + math.pi, abs=1e-8)
    assert checks["negative_mode_overlap"]["value"] >= 0.9999


def test_rank_three_is_linear_in_beta(tmp_path):
    assert main(["rank-three", "--beta", "0.01", "--out", str(tmp_path)]) == 0
    value = checks_by_name(read_report(tmp_path))["min_eigenvalue"]["value"]
    assert value == pytest.approx(-0.0018169, abs=1e-6)


def test_rank_three_beta_zero_is_kato_pair(tmp_path):
    assert main(["rank-three", "--beta", "0", "--out", str(tmp_path)]) == 0
    report = read_report(tmp_path)
    assert report["rank"] == 1
    assert checks_by_name(report)["positivity"]["passed"] is True


def test_rank_three_rejects_large_beta(tmp_path):
    out = tmp_path / "out"
    assert main(["rank-three", "--beta", "0.7", "--out", str(out)]) == 2
    assert not out.exists()


# ---------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------
def scan(tmp_path, sweep, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    config = write_config(tmp_path / "sweep.json", {"sweep": sweep, "grid": {"L": 20, "n": 401}})
    out = tmp_path / "scan"
    code = main(["scan", "--config", config, "--out", str(out), *extra])
    return code, out / "scan.csv"


def test_scan_kato_and_rank_three(tmp_path):
    code, path = scan(tmp_path, {"g_scale": [1.0], "f_scale": [math.pi / 2], "beta": [0.0, 0.1]})
    assert code == 0
    kato, rank_three = read_rows(path)
    assert float(kato["min_eigenvalue"]) >= -1e-8 * 2.0 / math.pi
    assert float(kato["product"]) == pytest.approx(math.pi / 2, rel=0.05)
    assert float(rank_three["min_eigenvalue"]) < 0
    assert float(rank_three["product"]) == pytest.approx(math.pi / 4, rel=0.05)
    assert [r["index"] for r in (kato, rank_three)] == ["0", "1"]


def test_scan_empty_sweep_writes_header_only(tmp_path):
    code, path = scan(tmp_path, {"g_scale": []})
    assert code == 0
    assert path.read_text() == (
        "index,g_scale,f_scale,f2_scale,beta,min_eigenvalue,rank,"
        "r_estimate,r_prime_estimate,product\n"
    )


def test_scan_rows_do_not_depend_on_threads(tmp_path):
    sweep = {"g_scale": [0.8, 1.0, 1.3], "f_scale": [1.2, math.pi / 2]}
    _, single = scan(tmp_path / "one", sweep, "--threads", "1")
    _, pooled = scan(tmp_path / "four", sweep, "--threads", "4")
    assert single.read_bytes() == pooled.read_bytes()


def test_scan_rejects_oversized_sweep(tmp_path):
    sweep = {"g_scale": [1.0] * 101, "f_scale": [1.0] * 100}
    code, path = scan(tmp_path, sweep)
    assert code == 2
    assert not path.exists()


@pytest.mark.parametrize("sweep", [{"g_scale": ["abc"]}, {"beta": [True]}, {"f_scale": [None]}])
def test_scan_rejects_non_numeric_sweep_values(tmp_path, sweep):
    code, path = scan(tmp_path, sweep)
    assert code == 2
    assert not path.exists()


def test_scan_point_without_feasible_default_grid_is_nan(tmp_path):
    config = write_config(tmp_path / "sweep.json", {"sweep": {"g_scale": [0.001]}})
    out = tmp_path / "scan"
    assert main(["scan", "--config", config, "--out", str(out)]) == 0
    (row,) = read_rows(out / "scan.csv")
    assert row["rank"] == "-1"
    assert math.isnan(float(row["min_eigenvalue"]))
    assert math.isnan(float(row["product"]))


def test_threads_env_must_be_integer(tmp_path, monkeypatch):
    monkeypatch.setenv("KATOLAB_THREADS", "many")
    assert main(["scan", "--out", str(tmp_path)]) == 2


def test_dotenv_supplies_threads_and_log_level(tmp_path, monkeypatch):
    for name in ("KATOLAB_THREADS", "KATOLAB_LOG_LEVEL"):
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    (tmp_path / ".env").write_text("KATOLAB_THREADS=3\nKATOLAB_LOG_LEVEL=debug\n")
    monkeypatch.chdir(tmp_path)
    _init_env()
    assert _default_threads() == 3
    configure_logging()
    assert logging.getLogger("katolab").level == logging.DEBUG
    configure_logging("INFO")


def test_bad_flag_is_invalid():
    assert main(["rank-one", "--no-such-flag"]) == 2
