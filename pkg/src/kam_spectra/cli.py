"""Command-line front end: declarative JSON experiments and flat-file reports.

Verbs
-----
scan       verify the spectral assumptions on the working window
constants  print the explicit constants for the configured perturbation
run        full pipeline (scan, constants, iteration, oracle, reports)
sweep      repeat ``run`` over a list of couplings or frequencies
oracle     dense diagonalization only

Exit codes: 0 success, 2 configuration error, 3 rigor violation,
4 numerical failure (divergence, degeneracy, ...).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import constants as K
from .band import alpha_norm, to_dense
from .engine import (
    EMPIRICAL,
    RIGOROUS,
    KamOptions,
    diophantine_report,
    localization_report,
    run_kam,
    unitarize,
)
from .errors import ConfigError, KamError, RigorViolationError
from .io import digest, dumps, ensure_dir, format_float, format_index, jsonable, write_csv
from .lattice import Window, default_interior_radius
from .oracle import dense_symmetric_eig, match_spectra
from .perturbation import (
    EXPLICIT,
    LAPLACIAN,
    PROFILE,
    PerturbationSpec,
    build_perturbation,
    hermitian_check,
    hermitian_profiles,
    make_profile,
)
from .spectrum import SpectrumModel, certify, check_h_conditions
from .talgebra import SpectralGrid

SCHEMA = "kam-spectra/1"
EXIT_OK, EXIT_CONFIG, EXIT_RIGOR, EXIT_NUMERIC = 0, 2, 3, 4

NAMED_FREQUENCIES = {
    "golden": (math.sqrt(5.0) - 1.0) / 2.0,
    "silver": math.sqrt(2.0) - 1.0,
    "bronze": (math.sqrt(13.0) - 3.0) / 2.0,
    "sqrt2": math.sqrt(2.0),
    "sqrt3": math.sqrt(3.0),
    "sqrt3m1": math.sqrt(3.0) - 1.0,
    "sqrt5m2": math.sqrt(5.0) - 2.0,
}


# -- config handling -----------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def bundled_config(name: str = "maryland.json") -> dict:
    return json.loads(resources.files("kam_spectra").joinpath("configs", name).read_text())


def _frequency(x):
    if isinstance(x, str):
        if x not in NAMED_FREQUENCIES:
            raise ConfigError(f"unknown named frequency {x!r}; known: {sorted(NAMED_FREQUENCIES)}")
        return NAMED_FREQUENCIES[x]
    try:
        return float(x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad frequency {x!r}") from exc


def _section(cfg, name):
    sec = cfg.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"config needs a '{name}' object")
    return sec


def _positive(sec, key, default):
    v = sec.get(key, default)
    if not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"{key} must be a positive number, got {v!r}")
    return float(v)


def build_window(cfg, radius_override=None) -> Window:
    run = _section(cfg, "run")
    pert = _section(cfg, "perturbation")
    d = int(_section(cfg, "model").get("d", 1))
    R = int(radius_override if radius_override is not None else run.get("radius", 20))
    if R < 1:
        raise ConfigError("radius must be >= 1")
    alpha = _positive(pert, "alpha", 1.0)
    interior = run.get("interior_radius")
    if interior is None:
        interior = default_interior_radius(R, alpha - K.sigma_of(alpha))
    if not 0 <= int(interior) <= R:
        raise ConfigError(f"interior_radius {interior} outside [0, {R}]")
    return Window(d, R, run.get("window_shape", "box"), int(interior))


def build_model(cfg, window: Window):
    """Model with certified ``c`` (scan) or the declared one; returns ``(model, reports)``."""
    m = _section(cfg, "model")
    d = int(m.get("d", 1))
    omega = m.get("omega", ["golden"])
    if not isinstance(omega, list):
        omega = [omega]
    omega = tuple(_frequency(w) for w in omega)
    if len(omega) != d:
        raise ConfigError(f"omega has {len(omega)} components for d={d}")
    try:
        model = SpectrumModel(d, omega, m.get("transform", "identity"), float(m.get("beta", 0.0)),
                              1.0, float(m.get("gamma", 1.0)))
    except (ValueError, KamError) as exc:
        raise ConfigError(str(exc)) from exc
    model.validate_on(window)
    c = m.get("c", "scan")
    scan = m.get("scan", {}) or {}
    cert, reports = certify(model, window, scan.get("kmax"), scan.get("jmax"))
    if c == "scan":
        return cert, reports
    if not isinstance(c, (int, float)) or c < 1:
        raise ConfigError(f"model.c must be 'scan' or a number >= 1, got {c!r}")
    declared = model.with_constants(float(c))
    _, reports = certify(declared, window, scan.get("kmax"), scan.get("jmax"), safety=1.0)
    reports = [type(r)(r.assumption_id, r.worst_constant, r.worst_witness,
                       bool(r.worst_constant <= declared.c * (1 + 1e-12)), declared.c, r.per_offset)
               for r in reports]
    return declared, reports


def build_spec(cfg, model) -> PerturbationSpec:
    p = _section(cfg, "perturbation")
    kind = p.get("kind", LAPLACIAN)
    alpha = _positive(p, "alpha", 1.0)
    herm = bool(p.get("hermitian", True))
    if kind == LAPLACIAN:
        return PerturbationSpec(LAPLACIAN, alpha, True)
    if kind == PROFILE:
        entries = p.get("profiles")
        if not entries:
            raise ConfigError("profile perturbation needs a nonempty 'profiles' list")
        profs = {}
        for e in entries:
            k = tuple(int(x) for x in e["k"])
            if len(k) != model.d:
                raise ConfigError(f"profile offset {k} has wrong dimension")
            profs[k] = make_profile(e["expr"], model)
        if p.get("complete_hermitian", False):
            profs = hermitian_profiles(model, profs)
        return PerturbationSpec(PROFILE, alpha, herm, profs)
    if kind == EXPLICIT:
        diags = {tuple(int(x) for x in e["k"]): complex(*e["value"]) if isinstance(e["value"], list)
                 else float(e["value"]) for e in p.get("diagonals", [])}
        return PerturbationSpec(EXPLICIT, alpha, herm, diagonals=diags)
    raise ConfigError(f"unknown perturbation kind {kind!r}")


def _options(cfg, mode_override=None, trace=None) -> KamOptions:
    run = _section(cfg, "run")
    mode = mode_override or run.get("mode", RIGOROUS)
    if mode not in (RIGOROUS, EMPIRICAL):
        raise ConfigError(f"mode must be rigorous or empirical, got {mode!r}")
    try:
        return KamOptions(
            mode=mode,
            max_steps=int(run.get("max_steps", 30)),
            min_steps=int(run.get("min_steps", 0)),
            convergence_tol=float(run.get("convergence_tol", 1e-14)),
            residual_tol=float(run.get("residual_tol", 1e-13)),
            series_tol=float(run.get("series_tol", 1e-15)),
            prune_floor=float(run.get("prune_floor", 1e-16)),
            trace=trace,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _epsilon(value, consts) -> float:
    if value == "eps_star":
        return consts.eps_star
    if isinstance(value, str) and value.startswith("eps_star*"):
        return consts.eps_star * float(value.split("*", 1)[1])
    if not isinstance(value, (int, float)):
        raise ConfigError(f"epsilon must be a number or 'eps_star', got {value!r}")
    return float(value)


# -- pipeline ------------------------------------------------------------------------------


class Setup:
    """Window, certified model, grid, perturbation and constants for one config."""

    def __init__(self, cfg, radius=None):
        self.cfg = cfg
        t0 = time.perf_counter()
        self.window = build_window(cfg, radius)
        self.model, self.reports = build_model(cfg, self.window)
        self.timing = {"scan_ms": 1e3 * (time.perf_counter() - t0)}
        self.grid = SpectralGrid(self.model, self.window)
        self.spec = build_spec(cfg, self.model)
        self.V = build_perturbation(self.spec, self.grid)
        self.v_norm = alpha_norm(self.V, self.spec.alpha)
        self.constants = K.KamConstants.compute(self.model.c, self.model.gamma, self.model.d,
                                                self.spec.alpha, self.v_norm)

    def model_block(self) -> dict:
        m = self.model
        return {"d": m.d, "omega": list(m.omega), "transform": m.transform, "beta": m.beta,
                "c": m.c, "gamma": m.gamma, "base_point": list(m.base_point)}

    def window_block(self) -> dict:
        w = self.window
        return {"d": w.d, "radius": w.radius, "interior_radius": w.interior_radius,
                "shape": w.shape, "size": w.size}


def run_pipeline(cfg, mode=None, radius=None, trace_stream=None, epsilon=None) -> dict:
    """Run one experiment in memory and return the report payload (plus arrays under ``_arrays``)."""
    st = Setup(cfg, radius)
    run = _section(cfg, "run")
    eps = _epsilon(run.get("epsilon", 0.0) if epsilon is None else epsilon, st.constants)
    opts = _options(cfg, mode, trace_stream)
    herm_ok, herm_worst = hermitian_check(st.V)
    t0 = time.perf_counter()
    res = run_kam(st.model, st.V, eps, opts)
    timing = dict(st.timing, kam_ms=1e3 * (time.perf_counter() - t0),
                  steps_ms=[r.get("wall_time_ms") for r in res.ledger])
    ledger = [{k: v for k, v in r.items() if k != "wall_time_ms"} for r in res.ledger]
    kmax = int(run.get("diophantine_kmax", 15))
    dio = diophantine_report(res, kmax)
    hermitian = st.spec.hermitian and herm_ok
    t1 = time.perf_counter()
    unit = unitarize(res, hermitian=hermitian)
    loc = localization_report(res, unit)
    timing["postprocess_ms"] = 1e3 * (time.perf_counter() - t1)
    inner = st.window.interior_mask[st.window.mask]
    match, theta = None, None
    if hermitian and run.get("oracle", True):
        t2 = time.perf_counter()
        H = np.diag(res.lam0.entries()) + eps * to_dense(st.V)
        orc = dense_symmetric_eig(H.real)
        theta = orc.paired_values()
        match = match_spectra(res.eigenvalues(), unit.vectors, orc, inner, st.window.points).to_dict()
        timing["oracle_ms"] = 1e3 * (time.perf_counter() - t2)
    payload = {
        "schema": SCHEMA,
        "config": cfg,
        "model": st.model_block(),
        "window": st.window_block(),
        "assumptions": [r.to_dict() for r in st.reports],
        "constants": st.constants.to_dict(),
        "perturbation": {"kind": st.spec.kind, "alpha": st.spec.alpha, "alpha_norm": st.v_norm,
                         "hermitian": bool(hermitian), "hermitian_violation": herm_worst},
        "run": {"epsilon": eps, "mode": res.mode, "converged": res.converged, "steps": res.steps,
                "residual": res.residual},
        "ledger": ledger,
        "diophantine": dio.to_dict(),
        "localization": loc.to_dict(),
        "unitarity": {"orthogonal": unit.orthogonal, "max_offdiag": unit.max_offdiag},
        "oracle_match": match,
    }
    payload["digest"] = digest(payload)
    payload["timing"] = timing
    payload["_arrays"] = {"points": st.window.points, "lam0": np.real(res.lam0.entries()),
                          "lam_eps": res.eigenvalues(), "theta": theta, "vectors": unit.vectors}
    return payload


def write_artifacts(payload, outdir, outputs) -> dict:
    out = ensure_dir(outdir)
    arrays = payload.pop("_arrays")
    paths = {}
    rep = out / outputs.get("report", "report.json")
    rep.write_text(dumps(payload) + "\n")
    paths["report"] = str(rep)
    pts, lam0, lam_eps, theta = arrays["points"], arrays["lam0"], arrays["lam_eps"], arrays["theta"]
    eig = out / outputs.get("eigenvalues", "eigenvalues.csv")
    write_csv(eig, ["n", "lambda_n", "lambda_n_eps", "oracle_theta"],
              [[format_index(p), float(lam0[i]), float(lam_eps[i]),
                "" if theta is None else float(theta[i])] for i, p in enumerate(pts)])
    paths["eigenvalues"] = str(eig)
    if outputs.get("vectors"):
        vec = out / outputs["vectors"]
        V = arrays["vectors"]
        rows = [[format_index(pts[i]), format_index(pts[j]), float(V[j, i].real), float(V[j, i].imag)]
                for i in range(V.shape[1]) for j in np.flatnonzero(V[:, i])]
        write_csv(vec, ["n", "j", "re", "im"], rows)
        paths["vectors"] = str(vec)
    return paths


# -- sweep ------------------------------------------------------------------------------------


def _sweep_job(args):
    cfg, param, value, mode, radius = args
    cfg = copy.deepcopy(cfg)
    row = {"param": param, "value": value}
    try:
        if param == "epsilon":
            cfg["run"]["epsilon"] = value
        else:
            cfg["model"]["omega"] = value if isinstance(value, list) else [value]
        p = run_pipeline(cfg, mode=mode, radius=radius)
        row.update(converged=p["run"]["converged"], steps=p["run"]["steps"],
                   residual=p["run"]["residual"], epsilon=p["run"]["epsilon"],
                   diophantine_margin=p["diophantine"]["worst_margin"],
                   localization_rate=p["localization"]["min_fitted_rate"], error="")
    except KamError as exc:
        row.update(converged=False, steps="", residual="", epsilon="", diophantine_margin="",
                   localization_rate="", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep(cfg, mode=None, radius=None, workers=None) -> list[dict]:
    """One row per sweep value, in input order; failures are recorded, not raised."""
    run = _section(cfg, "run")
    spec = run.get("sweep")
    if spec is None and isinstance(run.get("epsilon"), list):
        spec = {"param": "epsilon", "values": run["epsilon"]}
    if not isinstance(spec, dict) or spec.get("param") not in ("epsilon", "omega"):
        raise ConfigError("sweep needs run.sweep = {'param': 'epsilon'|'omega', 'values': [...]}")
    values = spec.get("values") or []
    if not values:
        raise ConfigError("sweep value list is empty")
    jobs = [(cfg, spec["param"], v, mode, radius) for v in values]
    cap = int(os.environ.get("KAM_SPECTRA_THREADS", os.cpu_count() or 1))
    workers = max(1, min(cap, len(jobs))) if workers is None else workers
    if workers == 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_job, jobs))


SWEEP_COLUMNS = ["param", "value", "epsilon", "converged", "steps", "residual",
                 "diophantine_margin", "localization_rate", "error"]


# -- verbs ------------------------------------------------------------------------------------


def _cmd_scan(cfg, args):
    window = build_window(cfg, args.radius)
    model, reports = build_model(cfg, window)
    h = check_h_conditions(model, window=window)
    return {"schema": SCHEMA, "window": {"radius": window.radius, "d": window.d},
            "model": {"c": model.c, "gamma": model.gamma, "transform": model.transform,
                      "omega": list(model.omega)},
            "assumptions": [r.to_dict() for r in reports], "h_conditions": h.to_dict()}


def _cmd_constants(cfg, args):
    st = Setup(cfg, args.radius)
    return {"schema": SCHEMA, "constants": st.constants.to_dict(),
            "laplacian_eps_star": K.laplacian_eps_star(st.model.c, st.model.gamma, st.model.d,
                                                       st.spec.alpha)}


def _cmd_oracle(cfg, args):
    st = Setup(cfg, args.radius)
    eps = _epsilon(_section(cfg, "run").get("epsilon", 0.0), st.constants)
    H = np.diag(np.real(st.grid.eigenvalue_sequence().entries())) + eps * to_dense(st.V)
    orc = dense_symmetric_eig(H)
    out = ensure_dir(args.out or cfg.get("outputs", {}).get("dir", "."))
    path = out / "oracle.csv"
    theta = orc.paired_values()
    write_csv(path, ["n", "oracle_theta"],
              [[format_index(p), float(theta[i])] for i, p in enumerate(st.window.points)])
    return {"schema": SCHEMA, "epsilon": eps, "sweeps": orc.sweeps, "csv": str(path),
            "min": float(orc.values[0]), "max": float(orc.values[-1])}


def _cmd_run(cfg, args):
    outputs = dict(cfg.get("outputs", {}) or {})
    outdir = args.out or outputs.get("dir", ".")
    trace = args.trace or bool(outputs.get("trace", False))
    ensure_dir(outdir)
    ledger_path = Path(outdir) / outputs.get("ledger", "ledger.jsonl")
    stream = open(ledger_path, "w") if trace else None
    try:
        payload = run_pipeline(cfg, args.mode, args.radius, stream)
    finally:
        if stream:
            stream.close()
    paths = write_artifacts(payload, outdir, outputs)
    if trace:
        paths["ledger"] = str(ledger_path)
    return {"schema": SCHEMA, "converged": payload["run"]["converged"],
            "steps": payload["run"]["steps"], "epsilon": payload["run"]["epsilon"],
            "digest": payload["digest"], "files": paths}


def _cmd_sweep(cfg, args):
    rows = sweep(cfg, args.mode, args.radius)
    outdir = ensure_dir(args.out or cfg.get("outputs", {}).get("dir", "."))
    path = outdir / cfg.get("outputs", {}).get("sweep", "sweep.csv")
    write_csv(path, SWEEP_COLUMNS, [[r.get(c, "") for c in SWEEP_COLUMNS] for r in rows])
    return {"schema": SCHEMA, "rows": len(rows), "failures": sum(1 for r in rows if r["error"]),
            "csv": str(path)}


VERBS = {"scan": _cmd_scan, "constants": _cmd_constants, "run": _cmd_run,
         "sweep": _cmd_sweep, "oracle": _cmd_oracle}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kam-spectra", description=__doc__.split("\n")[0])
    p.add_argument("verb", choices=sorted(VERBS))
    p.add_argument("--config", help="experiment JSON (default: bundled Maryland config)")
    p.add_argument("--mode", choices=[RIGOROUS, EMPIRICAL])
    p.add_argument("--radius", type=int)
    p.add_argument("--trace", action="store_true", help="write the per-step ledger as JSON lines")
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else bundled_config()
        summary = VERBS[args.verb](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RigorViolationError as exc:
        print(f"rigor violation: {exc}", file=sys.stderr)
        _dump_ledger(exc, args)
        return EXIT_RIGOR
    except (KamError, KeyError, TypeError) as exc:
        if isinstance(exc, (KeyError, TypeError)):
            print(f"config error: {exc!r}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        _dump_ledger(exc, args)
        return EXIT_NUMERIC
    print(json.dumps(jsonable(summary), indent=2, sort_keys=True))
    return EXIT_OK


def _dump_ledger(exc, args):
    ledger = getattr(exc, "ledger", None)
    if ledger:
        out = ensure_dir(args.out or ".")
        with open(out / "failed_ledger.jsonl", "w") as fh:
            for r in ledger:
                fh.write(json.dumps(jsonable(r), sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "run_pipeline", "sweep", "load_config", "bundled_config", "format_float"]
