"""Quadratically convergent diagonalization of ``T + eps V``.

Each step removes the off-diagonal part of the current perturbation
``P = eps_ell V^(ell)`` by a conjugation ``W`` solving

    [T', W] + P - [P] = 0,     T' = T + [P],  W_{m,m} = 1,

which leaves ``W^{-1} (P - [P]) (W - I)``, of order ``P^2``.  The product of the
``W`` accumulates into ``U`` with ``U^{-1} (T + eps V) U`` diagonal in the limit.

Only the combined ``P`` is stored: ``eps^(2^ell)`` underflows after a handful
of steps, but ``P`` itself stays representable.  ``eps_ell`` is kept for the
ledger (as a value and as ``log |eps_ell|``).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import constants as K
from .band import (
    BandOperator,
    alpha_norm,
    compose,
    diagonal_part,
    neumann_inverse,
    off_diagonal_part,
    to_dense,
)
from .errors import (
    DegenerateColumnError,
    DivergenceError,
    KamError,
    NeumannPreconditionError,
    RigorViolationError,
)
from .lattice import l1_norm, shift_grid, zero_index
from .talgebra import SpectralGrid, TSequence, reciprocal_difference, t_norm

RIGOROUS = "rigorous"
EMPIRICAL = "empirical"


@dataclass
class KamOptions:
    """Iteration controls.

    ``convergence_tol`` is relative: the loop stops once
    ``||P||_{alpha_ell} < convergence_tol * max(1, ||eps V||_alpha)``.
    ``min_steps`` forces extra steps past convergence (useful to observe the
    decay rate).  ``trace`` may be a writable text stream or a path; one
    JSON record per step is written to it.
    """

    mode: str = RIGOROUS
    max_steps: int = 30
    min_steps: int = 0
    convergence_tol: float = 1e-14
    residual_tol: float = 1e-13
    series_tol: float = 1e-15
    prune_floor: float = 1e-16
    alpha: float | None = None
    trace: object = None

    def __post_init__(self):
        if self.mode not in (RIGOROUS, EMPIRICAL):
            raise ValueError(f"mode must be 'rigorous' or 'empirical', got {self.mode!r}")
        for name in ("convergence_tol", "residual_tol", "series_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 0 or self.min_steps < 0:
            raise ValueError("step counts must be nonnegative")


@dataclass
class KamState:
    ell: int
    eps_ell: float
    log_abs_eps: float
    lam: TSequence
    correction: TSequence
    P: BandOperator
    U: BandOperator
    U_inv: BandOperator
    alpha_ell: float
    sigma_ell: float
    norm_P: float
    sum_norms: float
    ledger: list = field(default_factory=list)

    @property
    def V_op(self) -> BandOperator | None:
        """``V^(ell)`` itself, when ``eps_ell`` is representable and nonzero."""
        if self.eps_ell == 0 or not math.isfinite(self.eps_ell):
            return None
        return self.P * (1.0 / self.eps_ell)


@dataclass
class KamResult:
    grid: SpectralGrid
    eps: float
    alpha: float
    lam0: TSequence
    correction: TSequence
    lambda_eps: TSequence
    U: BandOperator
    U_inv: BandOperator
    P_final: BandOperator
    converged: bool
    steps: int
    residual: float
    mode: str
    constants: K.KamConstants
    ledger: list
    V: BandOperator

    @property
    def sigma(self) -> float:
        return self.constants.sigma

    def eigenvalues(self) -> np.ndarray:
        """``lambda_n(eps)`` in window order."""
        return np.real(self.lambda_eps.entries())


@dataclass
class _Context:
    grid: SpectralGrid
    consts: K.KamConstants
    opts: KamOptions
    tol_abs: float
    trace: IO | None = None


def _attach(exc: Exception, ledger):
    exc.ledger = list(ledger)
    return exc


def solve_homological(lam_next: TSequence, correction: TSequence, P: BandOperator,
                      c: float | None = None, gamma: float | None = None,
                      alpha_ell: float | None = None, delta: float | None = None,
                      residual_tol: float = 1e-13) -> tuple[BandOperator, dict]:
    """Solve ``[T', W] + P - [P] = 0`` with ``W_{m,m} = 1``.

    ``T'`` has eigenvalues ``lambda + correction`` (``lam_next``); its gaps are
    formed from the model's closed-form gaps plus the correction difference.
    Returns ``W`` and diagnostics: the entrywise residual, its scale, and (when
    ``alpha_ell`` and ``delta`` are given) the loss bound
    ``12 c^2 (2 gamma/(e delta))^(2 gamma) ||P||_{alpha_ell}``
    together with whether it applies (``||correction||_T <= 1/(4c)``) and holds.
    """
    grid = P.grid
    z = zero_index(grid.d)
    diags = {z: np.ones(grid.window.grid_shape)}
    residual = 0.0
    for k, pk in P.items():
        if k == z:
            continue
        r = reciprocal_difference(grid, k, correction)
        wk = pk * r.values
        gap = grid.gap(k)[0] + shift_grid(correction.values, k) - correction.values
        residual = max(residual, float(np.max(np.abs(pk - wk * gap))))
        diags[k] = wk
    W = BandOperator(grid, diags, P.alpha_hint)
    scale = max(P.scale(), np.finfo(float).tiny)
    info = {"residual": residual, "residual_scale": scale,
            "residual_ok": bool(residual <= residual_tol * scale)}
    if alpha_ell is not None and delta is not None:
        c = grid.model.c if c is None else c
        gamma = grid.model.gamma if gamma is None else gamma
        nW = alpha_norm(W.minus_identity(), alpha_ell - delta)
        bound = K.homological_factor(c, gamma, delta) * alpha_norm(P, alpha_ell)
        applies = t_norm(correction) <= 1.0 / (4.0 * c)
        info.update(norm_W_minus_I=nW, bound_W=bound, bound_applies=bool(applies),
                    bound_ok=bool(nW <= bound * (1 + 1e-12)))
    return W, info


def _initial_state(grid, P, alpha, eps) -> KamState:
    lam = grid.eigenvalue_sequence()
    zero = grid.sequence(0.0)
    I = BandOperator.identity(grid)
    a0, s0 = K.schedule(alpha, 0)
    nP = alpha_norm(P, a0)
    return KamState(0, float(eps), _log(abs(eps)), lam, zero, P, I, I, a0, s0, nP, 0.0, [])


def kam_step(state: KamState, ctx: _Context) -> KamState:
    """One conjugation step; returns the next state with its ledger record appended."""
    t0 = time.perf_counter()
    opts, consts, grid = ctx.opts, ctx.consts, ctx.grid
    rigorous = opts.mode == RIGOROUS
    ell, a, s = state.ell, state.alpha_ell, state.sigma_ell
    P = state.P

    D = diagonal_part(P)
    dvals = D.values(zero_index(grid.d))
    correction = TSequence(state.correction.values + dvals, grid.window.mask, grid)
    lam_next = TSequence(state.lam.values + dvals, grid.window.mask, grid)

    W, hinfo = solve_homological(lam_next, correction, P, consts.c, consts.gamma, a, s,
                                 opts.residual_tol)
    WmI = W.minus_identity()
    try:
        W_inv = neumann_inverse(W, a - s, s, series_tol=opts.series_tol, check=rigorous)
    except (NeumannPreconditionError, DivergenceError) as exc:
        partial = {"ell": ell, "eps_ell": state.eps_ell, "log_abs_eps_ell": state.log_abs_eps,
                   "alpha_ell": a, "sigma_ell": s, "norm_V": state.norm_P,
                   "norm_W_minus_I": hinfo["norm_W_minus_I"], "bound_W": hinfo["bound_W"],
                   "homological_residual": hinfo["residual"], "failure": str(exc)}
        raise _attach(DivergenceError(f"step {ell}: {exc}"), state.ledger + [partial]) from exc
    WinvmI = W_inv.minus_identity()

    P_off = off_diagonal_part(P)
    P_next = compose(compose(W_inv, P_off, prune_floor=opts.prune_floor), WmI,
                     prune_floor=opts.prune_floor)
    dU = compose(state.U, WmI, prune_floor=opts.prune_floor)
    dUinv = compose(WinvmI, state.U_inv, prune_floor=opts.prune_floor)
    U = state.U + dU
    U_inv = state.U_inv + dUinv

    a1, s1 = K.schedule(consts.alpha, ell + 1)
    nP_next = alpha_norm(P_next, a1)
    sum_norms = state.sum_norms + state.norm_P
    n_dU = alpha_norm(dU, a1 + s1)
    n_dUinv = alpha_norm(dUinv, a1)
    log_cd = consts.log_condition_CD(ell)
    cond = {
        "condA": bool(sum_norms <= 1.0 / (4.0 * consts.c) * (1 + 1e-12)),
        "condB": bool(_log(state.norm_P) <= consts.log_condition_B(ell) + 1e-12),
        "condC": bool(_log(n_dU) <= log_cd + 1e-12),
        "condD": bool(_log(n_dUinv) <= log_cd + 1e-12),
    }
    # eps_{ell+1} = eps_ell^2; the log survives after the value underflows
    eps_next = state.eps_ell**2
    log_eps_next = 2.0 * state.log_abs_eps
    record = {
        "ell": ell,
        "eps_ell": state.eps_ell,
        "log_abs_eps_ell": state.log_abs_eps,
        "alpha_ell": a,
        "sigma_ell": s,
        "norm_V": state.norm_P,
        "norm_V_next": nP_next,
        "norm_W_minus_I": hinfo["norm_W_minus_I"],
        "bound_W": hinfo["bound_W"],
        "bound_W_applies": hinfo["bound_applies"],
        "bound_W_ok": hinfo["bound_ok"],
        "norm_W_inv_minus_I": alpha_norm(WinvmI, a - 2 * s),
        "homological_residual": hinfo["residual"],
        "residual_scale": hinfo["residual_scale"],
        "residual_ok": hinfo["residual_ok"],
        "norm_dU": n_dU,
        "norm_dU_inv": n_dUinv,
        "correction_t_norm": t_norm(correction),
        **cond,
        "wall_time_ms": 1e3 * (time.perf_counter() - t0),
    }
    ledger = state.ledger + [record]
    if ctx.trace is not None:
        ctx.trace.write(json.dumps(record, sort_keys=True) + "\n")
        ctx.trace.flush()
    if rigorous:
        bad = [k for k in ("condA", "condB", "condC", "condD") if not cond[k]]
        if hinfo["bound_applies"] and not hinfo["bound_ok"]:
            bad.append("homological bound")
        if not hinfo["residual_ok"]:
            bad.append("homological residual")
        if bad:
            raise RigorViolationError(f"step {ell}: failed {', '.join(bad)}", ledger)
    return KamState(ell + 1, eps_next, log_eps_next, lam_next, correction, P_next, U, U_inv,
                    a1, s1, nP_next, sum_norms, ledger)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def run_kam(model, V: BandOperator, eps: float, options: KamOptions | None = None) -> KamResult:
    """Iterate until ``||P||_{alpha_ell}`` is below tolerance or ``max_steps`` is reached.

    Parameters
    ----------
    model : SpectrumModel
        Must be the model behind ``V.grid``; supplies ``c`` and ``gamma``.
    V : BandOperator
        The perturbation; its ``alpha_hint`` is the decay rate unless
        ``options.alpha`` is set.
    eps : float
        Coupling.  In rigorous mode ``|eps| <= eps*`` is required.

    Returns
    -------
    KamResult
        ``converged`` is False when ``max_steps`` ran out; this is not an error.
    """
    opts = options or KamOptions()
    grid = V.grid
    if model is not None and model != grid.model:
        raise ValueError("model does not match the perturbation's spectral grid")
    model = grid.model
    alpha = opts.alpha if opts.alpha is not None else V.alpha_hint
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError(f"need a finite positive decay rate, got {alpha}")
    v_norm = alpha_norm(V, alpha)
    consts = K.KamConstants.compute(model.c, model.gamma, model.d, alpha, v_norm)
    if opts.mode == RIGOROUS and abs(eps) > consts.eps_star * (1 + 1e-12):
        raise RigorViolationError(
            f"|eps| = {abs(eps):.3e} exceeds eps* = {consts.eps_star:.3e} in rigorous mode", [])

    P = V * eps
    tol_abs = opts.convergence_tol * max(1.0, abs(eps) * v_norm)
    trace, close = _open_trace(opts.trace)
    ctx = _Context(grid, consts, opts, tol_abs, trace)
    state = _initial_state(grid, P, alpha, eps)
    try:
        while True:
            done = state.norm_P < tol_abs or not len(state.P)
            if (done and state.ell >= opts.min_steps) or state.ell >= opts.max_steps:
                break
            if not len(state.P):
                break
            try:
                state = kam_step(state, ctx)
            except KamError as exc:
                if not hasattr(exc, "ledger") or not exc.ledger:
                    _attach(exc, state.ledger)
                raise
    finally:
        if close:
            trace.close()

    # fold the remaining diagonal into the eigenvalues (T' = T + [P])
    dvals = diagonal_part(state.P).values(zero_index(grid.d))
    correction = TSequence(state.correction.values + dvals, grid.window.mask, grid)
    lam_eps = TSequence(grid.lam + correction.values, grid.window.mask, grid)
    residual = alpha_norm(state.P, state.alpha_ell)
    converged = residual < tol_abs or not len(state.P)
    return KamResult(grid, float(eps), alpha, grid.eigenvalue_sequence(), correction, lam_eps,
                     state.U, state.U_inv, state.P, bool(converged), state.ell, residual,
                     opts.mode, consts, state.ledger, V)


def _open_trace(trace):
    if trace is None:
        return None, False
    if hasattr(trace, "write"):
        return trace, False
    return open(trace, "w"), True


# -- post-processing ----------------------------------------------------------------


@dataclass
class UnitarizeResult:
    vectors: np.ndarray
    C: np.ndarray
    column_norms: np.ndarray
    orthogonal: bool
    max_offdiag: float | None


def unitarize(result: KamResult, hermitian: bool = True, ortho_tol: float = 1e-8,
              denom_floor: float = 1e-12) -> UnitarizeResult:
    """Normalized columns ``u_n = U e_n / ||U e_n||`` and ``C_n = ||U||_{alpha-sigma} / ||U e_n||``.

    For hermitian ``V`` the interior off-diagonal entries of ``U^* U`` are
    checked against ``ortho_tol`` (``orthogonal`` flag and ``max_offdiag``);
    otherwise the raw columns are returned with ``orthogonal=False``.
    """
    U = to_dense(result.U)
    norms = np.linalg.norm(U, axis=0)
    if np.min(norms) < denom_floor:
        raise DegenerateColumnError(f"column norm {np.min(norms):.3e} below floor")
    vecs = U / norms
    nU = alpha_norm(result.U, result.alpha - result.sigma)
    C = nU / norms
    if not hermitian:
        return UnitarizeResult(vecs, C, norms, False, None)
    w = result.grid.window
    inner = w.interior_mask[w.mask]
    G = U.conj().T @ U
    G = G[np.ix_(inner, inner)]
    off = G - np.diag(np.diag(G))
    m = float(np.max(np.abs(off))) if off.size else 0.0
    return UnitarizeResult(vecs, C, norms, bool(m <= ortho_tol), m)


@dataclass
class DiophantineReport:
    per_k: dict
    passed: bool
    worst_margin: float
    failures: list

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "failures": [list(f) for f in self.failures],
            "per_k": [
                {"k": list(k), "worst_inverse_gap": v["worst"], "bound": v["bound"], "passed": v["passed"]}
                for k, v in self.per_k.items()
            ],
        }


def diophantine_report(result: KamResult, kmax: int, c: float | None = None,
                       gamma: float | None = None) -> DiophantineReport:
    """Check ``1 / |lambda_{n+k}(eps) - lambda_n(eps)| <= 12 c^2 |k|^(2 gamma)`` on interior pairs.

    ``worst_margin`` is the smallest ``bound / worst`` ratio (>= 1 means pass).
    Degenerate gaps are recorded as failures.
    """
    grid = result.grid
    model = grid.model
    c = model.c if c is None else c
    gamma = model.gamma if gamma is None else gamma
    w = grid.window
    inner = w.interior_mask
    per, failures = {}, []
    worst_margin = math.inf
    for k in w.offsets(kmax, include_zero=False):
        mask = inner & shift_grid(inner, k, fill=False)
        if not mask.any():
            continue
        gap = grid.gap(k)[0] + shift_grid(result.correction.values, k) - result.correction.values
        ag = np.abs(gap[mask])
        bound = K.reciprocal_bound(c, gamma, l1_norm(k))
        if ag.min() == 0 or not np.isfinite(ag).all():
            per[k] = {"worst": math.inf, "bound": bound, "passed": False}
            failures.append(k)
            worst_margin = 0.0
            continue
        worst = float(1.0 / ag.min())
        ok = worst <= bound
        per[k] = {"worst": worst, "bound": bound, "passed": bool(ok)}
        worst_margin = min(worst_margin, bound / worst)
        if not ok:
            failures.append(k)
    return DiophantineReport(per, not failures, worst_margin, failures)


@dataclass
class LocalizationReport:
    passed: bool
    worst_margin: float
    violations: int
    rates: dict
    min_rate: float
    C: dict

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "violations": self.violations,
            "min_fitted_rate": self.min_rate,
        }


def localization_report(result: KamResult, unit: UnitarizeResult | None = None,
                        alpha: float | None = None, sigma: float | None = None,
                        floor: float = 1e-300) -> LocalizationReport:
    """Check ``|<e_j, u_n>| <= C_n exp(-(alpha - sigma)|j - n|)`` for interior ``n``.

    ``worst_margin`` is the smallest ``log(bound) - log|<e_j, u_n>|`` over nonzero
    entries.  The fitted rate is minus the least-squares slope of
    ``log |<e_j, u_n>|`` against ``|j - n|`` (entries above ``floor`` only).
    """
    unit = unit or unitarize(result, hermitian=False)
    alpha = result.alpha if alpha is None else alpha
    sigma = result.sigma if sigma is None else sigma
    w = result.grid.window
    pts = w.points
    inner = np.flatnonzero(w.interior_mask[w.mask])
    rate_bound = alpha - sigma
    worst, violations, rates, Cs = math.inf, 0, {}, {}
    for i in inner:
        col = np.abs(unit.vectors[:, i])
        dist = np.abs(pts - pts[i]).sum(axis=1)
        nz = col > floor
        logb = math.log(unit.C[i]) - rate_bound * dist[nz]
        margin = logb - np.log(col[nz])
        worst = min(worst, float(margin.min()))
        violations += int(np.sum(margin < -1e-12))
        n = tuple(int(x) for x in pts[i])
        Cs[n] = float(unit.C[i])
        if len(np.unique(dist[nz])) >= 2:
            slope = np.polyfit(dist[nz], np.log(col[nz]), 1)[0]
            rates[n] = float(-slope)
        else:
            rates[n] = math.inf
    min_rate = min(rates.values()) if rates else math.inf
    return LocalizationReport(violations == 0, worst, violations, rates, min_rate, Cs)


def conjugation_defect(result_or_state, H: np.ndarray, interior_only: bool = True) -> float:
    """Max entry of ``U^{-1} H U - (T' + P)`` (dense), optionally on interior rows/cols."""
    st = result_or_state
    grid = st.grid if hasattr(st, "grid") else st.P.grid
    U, Ui = to_dense(st.U), to_dense(st.U_inv)
    lam = st.lambda_eps if hasattr(st, "lambda_eps") else st.lam
    D = np.diag(lam.entries())
    if hasattr(st, "P_final"):
        P = st.P_final - diagonal_part(st.P_final)
    else:
        P = st.P
    target = D + to_dense(P)
    M = Ui @ H @ U - target
    if interior_only:
        w = grid.window
        inner = w.interior_mask[w.mask]
        M = M[np.ix_(inner, inner)]
    return float(np.max(np.abs(M)))


def dense_hamiltonian(result: KamResult) -> np.ndarray:
    """Dense ``T + eps V`` on the window."""
    return np.diag(result.lam0.entries()) + result.eps * to_dense(result.V)


def radius_sweep(build, eps: float, radii, options: KamOptions | None = None) -> list[dict]:
    """Run the same experiment on several windows and report interior eigenvalue drift.

    ``build(radius)`` must return ``(model, V)``.  Drift is measured against
    the largest radius on the sites common to all interiors.
    """
    runs = []
    for R in sorted(radii):
        model, V = build(R)
        runs.append((R, run_kam(model, V, eps, options)))
    ref_R, ref = runs[-1]
    ref_w = ref.grid.window
    out = []
    for R, res in runs:
        w = res.grid.window
        pts = w.points[w.interior_mask[w.mask]]
        lam = res.eigenvalues()[w.interior_mask[w.mask]]
        ref_lam = np.array([np.real(ref.lambda_eps[tuple(p)]) for p in pts])
        drift = float(np.max(np.abs(lam - ref_lam))) if len(pts) else 0.0
        out.append({"radius": R, "converged": res.converged, "steps": res.steps,
                    "residual": res.residual, "drift_vs_largest": drift,
                    "reference_radius": ref_R, "reference_interior": ref_w.interior_radius})
    return out
