"""Perturbations: shaped profiles, the discrete Laplacian, explicit diagonals.

A profile perturbation has matrix elements ``V_{m,m+k} = f_k(lambda_m)``:
each diagonal is a function of the unperturbed eigenvalue, so the
divided differences in the T-norm stay controlled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .band import BandOperator, alpha_norm_profile, diagonal_norms
from .errors import ConfigError, ProfileError
from .lattice import MultiIndex, as_index, l1_norm, shifted_mask
from .spectrum import AssumptionReport
from .talgebra import SpectralGrid

PROFILE = "profile"
LAPLACIAN = "laplacian"
EXPLICIT = "explicit"
KINDS = (PROFILE, LAPLACIAN, EXPLICIT)

HERMITIAN_RTOL = 1e-12

Profile = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PerturbationSpec:
    """Declarative description of a perturbation ``V``.

    Parameters
    ----------
    kind : {"profile", "laplacian", "explicit"}
    alpha : float
        Declared decay rate.
    hermitian : bool
        Whether ``V`` is expected to be self-adjoint.
    profiles : mapping, optional
        ``{k: f_k}`` for ``kind="profile"``; each ``f_k`` maps an array of
        eigenvalues to an array of matrix elements.
    diagonals : mapping, optional
        ``{k: values}`` for ``kind="explicit"``; window-shaped grids or scalars.
    """

    kind: str
    alpha: float
    hermitian: bool = True
    profiles: Mapping[MultiIndex, Profile] = field(default_factory=dict)
    diagonals: Mapping[MultiIndex, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if not self.alpha > 0:
            raise ConfigError(f"decay rate alpha must be positive, got {self.alpha}")
        if self.kind == PROFILE and not self.profiles:
            raise ConfigError("profile perturbation needs at least one profile")

    @classmethod
    def laplacian(cls, alpha: float) -> "PerturbationSpec":
        return cls(LAPLACIAN, alpha, True)


def laplacian(grid: SpectralGrid, alpha: float = 1.0) -> BandOperator:
    """Nearest-neighbour hopping: ones on the ``|k| = 1`` diagonals."""
    d = grid.d
    diags = {}
    for i in range(d):
        for s in (1, -1):
            k = [0] * d
            k[i] = s
            diags[tuple(k)] = np.ones(grid.window.grid_shape)
    return BandOperator(grid, diags, alpha)


def build_perturbation(spec: PerturbationSpec, grid: SpectralGrid) -> BandOperator:
    """Assemble ``V`` on the grid's window."""
    if spec.kind == LAPLACIAN:
        return laplacian(grid, spec.alpha)
    w = grid.window
    if spec.kind == EXPLICIT:
        diags = {as_index(k, w.d): np.broadcast_to(np.asarray(v, dtype=complex), w.grid_shape)
                 for k, v in spec.diagonals.items()}
        return BandOperator(grid, diags, spec.alpha)
    diags = {}
    lam = grid.lam
    for k, f in spec.profiles.items():
        k = as_index(k, w.d)
        mask = shifted_mask(w, k)
        if not mask.any():
            continue
        try:
            vals = np.asarray(f(lam[mask]), dtype=complex)
            vals = np.broadcast_to(vals, lam[mask].shape)
        except Exception as exc:  # any failure inside user code is a profile error
            raise ProfileError(f"profile f_{k} failed: {exc}") from exc
        if not np.all(np.isfinite(vals)):
            raise ProfileError(f"profile f_{k} produced non-finite values")
        g = np.zeros(w.grid_shape, dtype=complex)
        g[mask] = vals
        diags[k] = g
    return BandOperator(grid, diags, spec.alpha)


def hermitian_profiles(model, half: Mapping[MultiIndex, Profile]) -> dict:
    """Complete ``{k: f_k}`` (given for one sign of each ``k``) into a self-adjoint family.

    Self-adjointness forces ``f_{-k}(lambda_m) = conj(f_k(lambda_{m-k}))``.  Since
    ``lambda_{m-k} = h(h^{-1}(lambda_m) - omega.k)``, the partner profile is again
    a function of the eigenvalue.  A ``k = 0`` entry must be real-valued.
    """
    full = {}
    omega = np.asarray(model.omega)
    for k, f in half.items():
        k = as_index(k, model.d)
        mk = tuple(-x for x in k)
        if mk in half and any(k):
            raise ConfigError(f"both {k} and {mk} given; pass one of each pair")
        full[k] = f
        if not any(k):
            full[k] = (lambda f0: lambda lam: np.real(f0(lam)))(f)
            continue
        shift = float(np.dot(omega, k))

        def partner(lam, f=f, shift=shift):
            return np.conj(f(model.h(model.h_inverse(lam) - shift)))

        full[mk] = partner
    return full


def verify_assumption_A4(V: BandOperator, alpha: float, kmax: int | None = None):
    """``||V||_alpha`` restricted to ``|k| <= kmax``, with per-offset breakdown.

    Returns ``(norm, report)``; the report's ``worst_witness`` is the offset
    attaining the supremum and ``per_offset`` maps each ``k`` to
    ``exp(alpha |k|) ||V_k||_T``.
    """
    prof = alpha_norm_profile(V, alpha)
    if kmax is not None:
        prof = {k: v for k, v in prof.items() if l1_norm(k) <= kmax}
    if not prof:
        return 0.0, AssumptionReport("A4", 0.0, (), True, math.inf, {})
    k_best = max(prof, key=prof.get)
    norm = float(prof[k_best])
    return norm, AssumptionReport("A4", norm, (k_best,), bool(np.isfinite(norm)), math.inf, prof)


def hermitian_check(V: BandOperator, rtol: float = HERMITIAN_RTOL) -> tuple[bool, float]:
    """Largest ``|(V_k)_m - conj((V_{-k})_{m+k})|`` and whether it is below ``rtol * scale``."""
    A = V.conj_transpose()
    worst = 0.0
    for k in set(V.offsets) | set(A.offsets):
        worst = max(worst, float(np.max(np.abs(V.values(k) - A.values(k)))))
    return worst <= rtol * max(1.0, V.scale()), worst


def profile_c1_norm(f: Profile, model, window=None, points_per_unit: int = 10_000) -> float:
    """Grid estimate of ``sup |g| + sup |g'|`` for ``g = f o h``.

    Periodic profiles are sampled on ``(-1/2, 1/2)``; otherwise on the range
    of ``omega . n`` over ``window`` (or ``[-1, 1]``).
    """
    if model.periodic:
        lo, hi = -0.5, 0.5
        n = int(points_per_unit) + 1
        x = np.linspace(lo, hi, n)[1:-1]
        if model.transform == "tan_pi":
            x = x[np.abs(x) < 0.5 - 1e-6]
    else:
        if window is not None:
            mu = model.mu(window.points)
            lo, hi = float(mu.min()), float(mu.max())
        else:
            lo, hi = -1.0, 1.0
        n = max(3, int(points_per_unit * max(hi - lo, 1e-9)) + 1)
        x = np.linspace(lo, hi, n)
    g = np.asarray(f(model.h(x)), dtype=complex)
    dg = np.gradient(g, x)
    return float(np.max(np.abs(g)) + np.max(np.abs(dg)))


def lipschitz_profile_bound(spec: PerturbationSpec, model, window, a: float) -> float:
    """``(1 + 1/a) sup_k exp(alpha |k|) ||f_k o h||_C1`` for a profile spec."""
    best = 0.0
    for k, f in spec.profiles.items():
        best = max(best, math.exp(spec.alpha * l1_norm(k)) * profile_c1_norm(f, model, window))
    return (1.0 + 1.0 / a) * best


# -- declarative profile expressions -----------------------------------------------

EXPRESSIONS = ("polynomial", "sin", "cos", "rational", "tanh", "constant")


def make_profile(expr: Mapping, model=None) -> Profile:
    """Turn a small JSON-style expression into a profile function of ``lambda``.

    Forms (``amplitude`` defaults to 1, ``arg`` to ``"lambda"``)::

        {"type": "polynomial", "coeffs": [c0, c1, ...]}        sum c_i x^i
        {"type": "sin" | "cos" | "tanh", "freq": w, "phase": p} f(w x + p)
        {"type": "rational", "num": [...], "den": [...]}        num(x) / den(x)
        {"type": "constant", "value": v}

    With ``"arg": "mu"`` the expression is applied to ``h^{-1}(lambda)``, i.e.
    the profile is ``g o h^{-1}`` for the given ``g``.
    """
    if not isinstance(expr, Mapping) or "type" not in expr:
        raise ConfigError(f"profile expression needs a 'type': {expr!r}")
    kind = expr["type"]
    if kind not in EXPRESSIONS:
        raise ConfigError(f"unknown profile expression {kind!r}; choose from {EXPRESSIONS}")
    amp = complex(expr.get("amplitude", 1.0))
    arg = expr.get("arg", "lambda")
    if arg not in ("lambda", "mu"):
        raise ConfigError(f"profile argument must be 'lambda' or 'mu', got {arg!r}")
    if arg == "mu" and model is None:
        raise ConfigError("profile argument 'mu' needs a spectrum model")

    def poly(cs):
        cs = [float(c) for c in cs]
        return lambda x: np.polynomial.polynomial.polyval(x, cs)

    if kind == "polynomial":
        core = poly(expr.get("coeffs", [0.0]))
    elif kind == "constant":
        v = complex(expr.get("value", 1.0))
        core = lambda x: np.full(np.shape(x), v)  # noqa: E731
    elif kind == "rational":
        num, den = poly(expr.get("num", [1.0])), poly(expr.get("den", [1.0]))
        core = lambda x: num(x) / den(x)  # noqa: E731
    else:
        fn = {"sin": np.sin, "cos": np.cos, "tanh": np.tanh}[kind]
        w, p = float(expr.get("freq", 1.0)), float(expr.get("phase", 0.0))
        core = lambda x: fn(w * x + p)  # noqa: E731

    if arg == "mu":
        return lambda lam: amp * core(model.h_inverse(lam))
    return lambda lam: amp * core(np.asarray(lam, dtype=float))


__all__ = [
    "PerturbationSpec", "build_perturbation", "laplacian", "hermitian_profiles",
    "verify_assumption_A4", "hermitian_check", "profile_c1_norm", "lipschitz_profile_bound",
    "make_profile", "diagonal_norms",
]
