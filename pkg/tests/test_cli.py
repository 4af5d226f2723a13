import copy
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from kam_spectra import SpectralGrid, SpectrumModel, Window, laplacian
from kam_spectra.band import to_dense
from kam_spectra.cli import SCHEMA, bundled_config, main, run_pipeline, sweep
from kam_spectra.errors import ConfigError
from kam_spectra.io import (
    digest,
    format_float,
    format_index,
    parse_index,
    read_csv,
    read_operator_csv,
    write_operator_csv,
)


@pytest.fixture
def cfg():
    return bundled_config()


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_cli(tmp_path, cfg, *extra):
    out = tmp_path / "out"
    code = main(["run", "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    return code, out


def test_bundled_config_run(tmp_path, cfg, capsys):
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema"] == SCHEMA and rep["run"]["converged"]
    assert rep["run"]["mode"] == "rigorous"
    assert rep["constants"]["eps_star"] == pytest.approx(rep["run"]["epsilon"])
    assert all(a["passed"] for a in rep["assumptions"])
    assert rep["oracle_match"]["max_eig_diff"] <= 1e-8
    assert rep["diophantine"]["passed"] and rep["localization"]["passed"]
    assert "wall_time_ms" not in json.dumps(rep["ledger"])
    rows = read_csv(out / "eigenvalues.csv")
    assert list(rows[0]) == ["n", "lambda_n", "lambda_n_eps", "oracle_theta"]
    assert rows[0]["n"] == "-40" and len(rows) == 81
    ledger = [json.loads(x) for x in (out / "ledger.jsonl").read_text().splitlines()]
    assert len(ledger) == rep["run"]["steps"]
    assert (out / "vectors.csv").exists()
    summary = json.loads(capsys.readouterr().out)
    assert summary["digest"] == rep["digest"]


def test_reports_are_bit_stable(tmp_path, cfg):
    a = run_pipeline(copy.deepcopy(cfg))
    b = run_pipeline(copy.deepcopy(cfg))
    assert a["digest"] == b["digest"]
    for p in (a, b):
        p.pop("_arrays"), p.pop("timing")
    assert json.dumps(a, sort_keys=True, default=str) == json.dumps(b, sort_keys=True, default=str)
    body = {k: v for k, v in a.items() if k != "digest"}
    assert digest(body) == a["digest"]


def test_rigor_violation_exit_code(tmp_path, cfg):
    cfg["run"]["epsilon"] = 1e-3
    code, out = run_cli(tmp_path, cfg)
    assert code == 3
    assert not (out / "report.json").exists()


def test_zero_coupling(tmp_path, cfg):
    cfg["run"]["epsilon"] = 0.0
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    rows = read_csv(out / "eigenvalues.csv")
    assert all(r["lambda_n"] == r["lambda_n_eps"] for r in rows)
    rep = json.loads((out / "report.json").read_text())
    assert rep["run"]["steps"] == 0 and rep["unitarity"]["max_offdiag"] == 0.0


def test_divergence_exit_code(tmp_path, cfg):
    cfg["run"].update(epsilon=0.8, mode="empirical")
    code, out = run_cli(tmp_path, cfg)
    assert code == 4
    assert (out / "failed_ledger.jsonl").exists()


@pytest.mark.parametrize("mutate", [
    lambda c: c["model"].update(omega=["unknown"]),
    lambda c: c["model"].update(c=0.5),
    lambda c: c["perturbation"].update(kind="random"),
    lambda c: c["perturbation"].update(alpha=-1),
    lambda c: c["run"].update(mode="fast"),
    lambda c: c["run"].update(epsilon="big"),
    lambda c: c["run"].update(convergence_tol=0),
    lambda c: c.pop("model"),
])
def test_config_errors(tmp_path, cfg, mutate):
    mutate(cfg)
    code, _ = run_cli(tmp_path, cfg)
    assert code == 2


def test_missing_or_malformed_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["scan", "--config", str(bad)]) == 2


def test_mode_and_radius_flags(tmp_path, cfg):
    cfg["run"]["epsilon"] = 0.01
    code, out = run_cli(tmp_path, cfg, "--mode", "empirical", "--radius", "30")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["window"]["radius"] == 30 and rep["run"]["mode"] == "empirical"


def test_scan_constants_oracle_verbs(tmp_path, cfg, capsys):
    path = write(tmp_path, cfg)
    assert main(["scan", "--config", path]) == 0
    scan = json.loads(capsys.readouterr().out)
    assert scan["h_conditions"]["a"] == pytest.approx(math.pi)
    assert main(["constants", "--config", path]) == 0
    consts = json.loads(capsys.readouterr().out)
    assert consts["constants"]["eps_star"] == pytest.approx(consts["laplacian_eps_star"], rel=1e-12)
    assert main(["oracle", "--config", path, "--out", str(tmp_path)]) == 0
    orc = json.loads(capsys.readouterr().out)
    assert len(read_csv(orc["csv"])) == 81


def test_profile_config(tmp_path, cfg):
    cfg["perturbation"] = {"kind": "profile", "alpha": 1.0, "hermitian": True, "complete_hermitian": True,
                           "profiles": [{"k": [1], "expr": {"type": "cos", "arg": "mu"}},
                                        {"k": [2], "expr": {"type": "constant", "value": 0.5}}]}
    cfg["run"].update(epsilon=1e-3, mode="empirical")
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["perturbation"]["hermitian"] and rep["oracle_match"]["max_eig_diff"] <= 1e-8


def test_epsilon_sweep_residuals_monotone(cfg):
    cfg["run"].update(mode="empirical", min_steps=4,
                      sweep={"param": "epsilon", "values": [0, 1e-4, 1e-3, 1e-2]})
    rows = sweep(cfg, workers=1)
    assert [r["value"] for r in rows] == [0, 1e-4, 1e-3, 1e-2]
    res = [r["residual"] for r in rows]
    assert all(a <= b for a, b in zip(res, res[1:]))
    assert all(r["converged"] and not r["error"] for r in rows)


def test_omega_sweep_all_converge(cfg, monkeypatch):
    monkeypatch.setenv("KAM_SPECTRA_THREADS", "2")
    cfg["run"].update(mode="empirical", epsilon=1e-3,
                      sweep={"param": "omega", "values": ["golden", "silver", "bronze", "sqrt3m1", "sqrt5m2"]})
    rows = sweep(cfg)
    assert [r["value"] for r in rows] == ["golden", "silver", "bronze", "sqrt3m1", "sqrt5m2"]
    assert all(r["converged"] for r in rows)


def test_sweep_records_failures_per_row(cfg):
    cfg["run"].update(mode="rigorous", sweep={"param": "epsilon", "values": [0.0, 1e-2]})
    rows = sweep(cfg, workers=1)
    assert rows[0]["converged"] and rows[0]["error"] == ""
    assert rows[1]["error"].startswith("RigorViolationError")


def test_empty_sweep_is_config_error(tmp_path, cfg):
    cfg["run"]["sweep"] = {"param": "epsilon", "values": []}
    with pytest.raises(ConfigError):
        sweep(cfg)
    assert main(["sweep", "--config", write(tmp_path, cfg)]) == 2


def test_sweep_verb_writes_csv(tmp_path, cfg):
    cfg["run"].update(mode="empirical", sweep={"param": "epsilon", "values": [1e-4, 1e-3]})
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert [float(r["value"]) for r in rows] == [1e-4, 1e-3]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kam_spectra.cli", "constants"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["schema"] == SCHEMA


def test_csv_conventions(tmp_path):
    assert format_index((1, -2)) == "1;-2" and parse_index("1;-2") == (1, -2)
    assert format_float(0.1) == "0.1" and float(format_float(1 / 3)) == 1 / 3
    assert format_float(math.inf) == "inf" and format_float(math.nan) == "nan"
    with pytest.raises(ConfigError):
        parse_index("1;x")
    g = SpectralGrid(SpectrumModel(2, (1.0, math.sqrt(2)), "identity"), Window(2, 2))
    L = laplacian(g) * (0.5 + 0.25j)
    write_operator_csv(L, tmp_path / "op.csv")
    back = read_operator_csv(tmp_path / "op.csv", g)
    assert np.array_equal(to_dense(back), to_dense(L))
