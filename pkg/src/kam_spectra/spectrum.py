"""Unperturbed spectra ``lambda_n = h(omega . n)`` and numerical assumption checks.

Four profile functions ``h`` are supported: the identity (linear flow), the
cubic ``x + beta x^3``, ``tan(pi x)`` and the sawtooth ``x + j_x`` that folds
``x`` into ``(-1/2, 1/2]``.  The last two are 1-periodic and need ``(omega, 1)``
to be Diophantine.

Gaps ``lambda_{n+k} - lambda_n`` are evaluated through closed forms rather
than by subtracting eigenvalues, so translation-invariant models (identity)
give exactly ``omega . k`` and tangent gaps do not lose digits near poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    FlatFunctionError,
    InvalidWindowError,
    PoleError,
    ResonanceError,
)
from .lattice import MultiIndex, Window, as_index, l1_norm, shift_grid, zero_index

IDENTITY = "identity"
CUBIC = "cubic"
TAN_PI = "tan_pi"
SAWTOOTH = "sawtooth"
TRANSFORMS = (IDENTITY, CUBIC, TAN_PI, SAWTOOTH)
PERIODIC = (TAN_PI, SAWTOOTH)

POLE_MARGIN = 1e-8
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SAFETY_FACTOR = 1.05


def fold(x):
    """``w(x) = x + j_x``, the representative of ``x`` mod 1 in ``(-1/2, 1/2]``."""
    x = np.asarray(x, dtype=float)
    return x - np.ceil(x - 0.5)


@dataclass(frozen=True)
class SpectrumModel:
    """Eigenvalues ``lambda_n = h(mu_n)`` with ``mu_n = omega . n``.

    ``c`` and ``gamma`` are the Diophantine data used downstream (norm
    thresholds, KAM constants); ``certify`` produces a model whose ``c``
    comes from a finite-window scan.
    """

    d: int
    omega: tuple[float, ...]
    transform: str = IDENTITY
    beta: float = 0.0
    c: float = 1.0
    gamma: float = 1.0
    base_point: MultiIndex | None = None

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if self.d < 1 or len(self.omega) != self.d:
            raise InvalidWindowError(f"omega must have {self.d} components")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform == CUBIC and self.beta < 0:
            raise ValueError("cubic transform needs beta >= 0")
        if self.c < 1:
            raise ValueError(f"Diophantine constant c must be >= 1, got {self.c}")
        if self.gamma <= 0:
            raise ValueError(f"Diophantine exponent gamma must be > 0, got {self.gamma}")
        bp = zero_index(self.d) if self.base_point is None else as_index(self.base_point, self.d)
        object.__setattr__(self, "base_point", bp)

    @classmethod
    def maryland(cls, omega: float = GOLDEN, **kw) -> "SpectrumModel":
        return cls(1, (omega,), TAN_PI, **kw)

    @property
    def periodic(self) -> bool:
        return self.transform in PERIODIC

    def with_constants(self, c: float, gamma: float | None = None) -> "SpectrumModel":
        return SpectrumModel(
            self.d, self.omega, self.transform, self.beta, max(1.0, float(c)),
            self.gamma if gamma is None else gamma, self.base_point,
        )

    # -- profile function h and derivatives ----------------------------------

    def h(self, x):
        x = np.asarray(x, dtype=float)
        if self.transform == IDENTITY:
            return x.copy()
        if self.transform == CUBIC:
            return x + self.beta * x**3
        if self.transform == SAWTOOTH:
            return fold(x)
        w = fold(x)
        if np.any(np.abs(w) > 0.5 - POLE_MARGIN):
            raise PoleError("tan(pi x) evaluated within 1e-8 of a pole")
        return np.tan(np.pi * w)

    def h_prime(self, x):
        x = np.asarray(x, dtype=float)
        if self.transform in (IDENTITY, SAWTOOTH):
            return np.ones_like(x)
        if self.transform == CUBIC:
            return 1.0 + 3.0 * self.beta * x**2
        return np.pi / np.cos(np.pi * fold(x)) ** 2

    def h_second(self, x):
        x = np.asarray(x, dtype=float)
        if self.transform in (IDENTITY, SAWTOOTH):
            return np.zeros_like(x)
        if self.transform == CUBIC:
            return 6.0 * self.beta * x
        c = np.cos(np.pi * fold(x))
        return 2.0 * np.pi**2 * np.tan(np.pi * fold(x)) / c**2

    def h_inverse(self, lam):
        """Inverse of ``h`` (onto ``(-1/2, 1/2)`` for periodic profiles)."""
        lam = np.asarray(lam, dtype=float)
        if self.transform in (IDENTITY, SAWTOOTH):
            return lam.copy()
        if self.transform == TAN_PI:
            return np.arctan(lam) / np.pi
        if self.beta == 0:
            return lam.copy()
        # Cardano: x^3 + x/beta - lam/beta = 0 has one real root (h strictly increasing)
        p = 1.0 / self.beta
        q = -lam / self.beta
        disc = np.sqrt(q**2 / 4.0 + p**3 / 27.0)
        return np.cbrt(-q / 2.0 + disc) + np.cbrt(-q / 2.0 - disc)

    # -- eigenvalues and gaps -------------------------------------------------

    def mu(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        return pts @ np.asarray(self.omega)

    def eigenvalues(self, points) -> np.ndarray:
        return self.h(self.mu(points))

    def eigenvalue(self, n: Sequence[int]) -> float:
        return float(self.eigenvalues([as_index(n, self.d)])[0])

    def _gap_formula(self, x, y):
        """``h(x + y) - h(x)`` through a closed form (arrays broadcast)."""
        if self.transform == IDENTITY:
            return np.broadcast_to(y, np.broadcast(x, y).shape).astype(float)
        if self.transform == CUBIC:
            return y * (1.0 + self.beta * (3.0 * x**2 + 3.0 * x * y + y**2))
        if self.transform == SAWTOOTH:
            return fold(x + y) - fold(x)
        a, b = fold(x + y), fold(x)
        if np.any(np.abs(a) > 0.5 - POLE_MARGIN) or np.any(np.abs(b) > 0.5 - POLE_MARGIN):
            raise PoleError("tan(pi x) evaluated within 1e-8 of a pole")
        # tan(pi a) - tan(pi b) = sin(pi (a - b)) / (cos(pi a) cos(pi b)), and a - b = y + j
        # for an integer j from folding; sin(pi (y + j)) = (-1)^j sin(pi y) keeps full precision
        j = np.rint(a - b - y)
        sign = 1.0 - 2.0 * np.mod(j, 2.0)
        return sign * np.sin(np.pi * y) / (np.cos(np.pi * a) * np.cos(np.pi * b))

    def gaps(self, points, k: Sequence[int]) -> np.ndarray:
        """``lambda_{n+k} - lambda_n`` for each row ``n`` of ``points``."""
        y = float(np.dot(np.asarray(k, dtype=float), self.omega))
        return self._gap_formula(self.mu(points), y)

    def base_gap(self, j: Sequence[int]) -> float:
        """``lambda_{p+j} - lambda_p`` for the base point ``p``."""
        return float(self.gaps([self.base_point], j)[0])

    def base_gaps(self, offsets) -> np.ndarray:
        """``lambda_{p+j} - lambda_p`` for each row ``j`` of ``offsets``."""
        y = np.asarray(offsets, dtype=float).reshape(-1, self.d) @ np.asarray(self.omega)
        x = float(np.dot(self.base_point, self.omega))
        return self._gap_formula(np.full_like(y, x), y)

    def grid_eigenvalues(self, window: Window) -> np.ndarray:
        """Eigenvalues laid out on the window grid (zero outside the window)."""
        out = np.zeros(window.grid_shape)
        out[window.mask] = self.eigenvalues(window.points)
        return out

    def grid_gaps(self, window: Window, k: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Gap grid for offset ``k`` and the mask of its domain ``{n, n+k in window}``."""
        mask = window.mask & shift_grid(window.mask, k, fill=False)
        out = np.zeros(window.grid_shape)
        if mask.any():
            out[mask] = self.gaps(np.argwhere(mask) - window.radius, k)
        return out, mask

    def validate_on(self, window: Window, denom_floor: float = 1e-12) -> None:
        """Check poles, resonances and simplicity of the spectrum on ``window``."""
        lam = self.eigenvalues(window.points)
        scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
        floor = denom_floor * scale
        for k in window.offsets(include_zero=False):
            g, mask = self.grid_gaps(window, k)
            if mask.any() and np.min(np.abs(g[mask])) < floor:
                n = np.argwhere(mask & (np.abs(g) < floor))[0] - window.radius
                raise DegenerateSpectrumError(
                    f"eigenvalues at {tuple(n)} and {tuple(n + np.asarray(k))} coincide "
                    f"to within {floor:g}"
                )


# -- Diophantine scans -----------------------------------------------------------


def diophantine_scan(omega, window: Window | int, gamma: float, periodic: bool = False):
    """Worst Diophantine constant of ``omega`` over the nonzero offsets of a window.

    Returns ``(C_est, k)`` with ``C_est = max 1 / (|omega.k| |k|^gamma)``, or with
    ``|omega.k|`` replaced by the distance to the nearest integer when
    ``periodic``.  ``window`` may be an integer radius (l1 ball of offsets).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = omega.size
    if isinstance(window, Window):
        ks = np.argwhere(window.mask) - window.radius
    else:
        r = int(window)
        ks = np.argwhere(np.ones((2 * r + 1,) * d, dtype=bool)) - r
        ks = ks[np.abs(ks).sum(axis=1) <= r]
    ks = ks[np.any(ks != 0, axis=1)]
    if ks.size == 0:
        raise InvalidWindowError("no nonzero offsets to scan")
    x = ks @ omega
    dist = np.abs(x - np.round(x)) if periodic else np.abs(x)
    if np.any(dist <= 1e-15 * np.maximum(1.0, np.abs(x))):
        k = ks[np.argmin(dist)]
        raise ResonanceError(f"omega is resonant at k={tuple(int(v) for v in k)}")
    vals = 1.0 / (dist * np.abs(ks).sum(axis=1) ** gamma)
    i = int(np.argmax(vals))
    return float(vals[i]), tuple(int(v) for v in ks[i])


# -- assumption verifiers -------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    assumption_id: str
    worst_constant: float
    worst_witness: tuple
    passed: bool
    declared_c: float
    per_offset: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption_id,
            "worst_constant": self.worst_constant,
            "worst_witness": [list(w) for w in self.worst_witness],
            "declared_c": self.declared_c,
            "passed": self.passed,
        }


def _offsets_upto(window: Window, kmax: int | None) -> list[MultiIndex]:
    if kmax is not None and kmax < 1:
        raise InvalidWindowError("kmax must be >= 1")
    if kmax is not None and kmax > 2 * window.radius * window.d:
        raise InvalidWindowError(f"kmax={kmax} exceeds the window diameter")
    return window.offsets(kmax, include_zero=False)


def _report(aid, worst, witness, per, c):
    return AssumptionReport(aid, float(worst), witness, bool(worst <= c * (1 + 1e-12)), float(c), per)


def _sup_inverse_gap(model, window, k, floor):
    g, mask = model.grid_gaps(window, k)
    if not mask.any():
        return None, None
    absg = np.where(mask, np.abs(g), np.inf)
    i = np.unravel_index(np.argmin(absg), absg.shape)
    if absg[i] < floor:
        raise DegenerateSpectrumError(f"degenerate pair at n={tuple(np.asarray(i) - window.radius)}, k={k}")
    return 1.0 / absg[i], tuple(int(v) for v in np.asarray(i) - window.radius)


def verify_assumption_A1(model: SpectrumModel, window: Window, kmax: int | None = None,
                         denom_floor: float = 1e-300) -> AssumptionReport:
    """``max_k sup_n |lambda_{n+k} - lambda_n|^{-1} / |k|^gamma`` over the window."""
    worst, witness, per = 0.0, (), {}
    for k in _offsets_upto(window, kmax):
        s, n = _sup_inverse_gap(model, window, k, denom_floor)
        if s is None:
            continue
        val = s / l1_norm(k) ** model.gamma
        per[k] = val
        if val > worst:
            worst, witness = val, (n, k)
    return _report("A1", worst, witness, per, model.c)


def verify_assumption_A2(model: SpectrumModel, window: Window, kmax: int | None = None,
                         denom_floor: float = 1e-300) -> AssumptionReport:
    """``max_k sup_n |lambda_{n+k} - lambda_n|^{-1} / (1 + 1/|lambda_k - lambda_0|)``."""
    worst, witness, per = 0.0, (), {}
    for k in _offsets_upto(window, kmax):
        s, n = _sup_inverse_gap(model, window, k, denom_floor)
        if s is None:
            continue
        val = s / (1.0 + 1.0 / abs(model.base_gap(k)))
        per[k] = val
        if val > worst:
            worst, witness = val, (n, k)
    return _report("A2", worst, witness, per, model.c)


def verify_assumption_A3(model: SpectrumModel, window: Window, kmax: int | None = None,
                         jmax: int | None = None, denom_floor: float = 1e-300) -> AssumptionReport:
    """Second-difference condition: for each ``k`` the worst

    ``|(1/(lambda_j - lambda_0)) (r_k(n+j) - r_k(n))|`` with ``r_k(n) = 1/(lambda_{n+k} - lambda_n)``,
    over ``n, n+j, n+k, n+j+k`` in the window and ``0 < |j| <= jmax``, divided by
    ``1 + 1/|lambda_k - lambda_0|``.
    """
    ks = _offsets_upto(window, kmax)
    worst, witness, per = 0.0, (), {}
    for k in ks:
        g, mask = model.grid_gaps(window, k)
        if not mask.any():
            continue
        gk = g[mask]
        if np.min(np.abs(gk)) < denom_floor:
            raise DegenerateSpectrumError(f"degenerate pair for k={k}")
        r = 1.0 / gk
        pts = np.argwhere(mask) - window.radius
        diff_pts = pts[None, :, :] - pts[:, None, :]  # j = n' - n
        jl1 = np.abs(diff_pts).sum(axis=2)
        ok = jl1 > 0
        if jmax is not None:
            ok &= jl1 <= jmax
        if not ok.any():
            continue
        js = diff_pts[ok]
        den = model.base_gaps(js)
        if np.min(np.abs(den)) < denom_floor:
            raise DegenerateSpectrumError("lambda_j coincides with lambda_0")
        vals = np.abs(r[None, :] - r[:, None])[ok] / np.abs(den)
        i = int(np.argmax(vals))
        val = vals[i] / (1.0 + 1.0 / abs(model.base_gap(k)))
        per[k] = float(val)
        if val > worst:
            p, q = np.argwhere(ok)[i]
            worst = float(val)
            witness = (tuple(int(v) for v in pts[p]), tuple(int(v) for v in js[i]), k)
    return _report("A3", worst, witness, per, model.c)


def certify(model: SpectrumModel, window: Window, kmax: int | None = None,
            jmax: int | None = None, safety: float = SAFETY_FACTOR):
    """Scan A1-A3 on ``window`` and return ``(certified_model, reports)``.

    The certified constant is ``max(1, safety * worst scan value)``; the
    returned reports are re-evaluated against it.
    """
    reps = [
        verify_assumption_A1(model, window, kmax),
        verify_assumption_A2(model, window, kmax),
        verify_assumption_A3(model, window, kmax, jmax),
    ]
    worst = max(r.worst_constant for r in reps)
    cert = model.with_constants(max(1.0, safety * worst))
    reps = [
        AssumptionReport(r.assumption_id, r.worst_constant, r.worst_witness,
                         bool(r.worst_constant <= cert.c * (1 + 1e-12)), cert.c, r.per_offset)
        for r in reps
    ]
    return cert, reps


# -- profile-function conditions ---------------------------------------------------


@dataclass(frozen=True)
class HConditionsReport:
    transform: str
    a: float
    b: float
    h_prime_max: float
    delta1: float | None
    diophantine_C: float | None
    c_lemma: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _grid(lo, hi, step):
    n = max(3, int(round((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def _inv_gap_derivative(model, x, y):
    """``d/dx 1/(h(x+y) - h(x))`` on arrays (periodic profiles folded)."""
    if model.transform == TAN_PI:
        # 1/(tan a - tan b) = cos a cos b / sin(a - b)
        return -np.pi * np.sin(np.pi * (2 * x + y)) / np.sin(np.pi * y)
    if model.transform == SAWTOOTH:
        return np.zeros(np.broadcast(x, y).shape)
    num = model.h_prime(x + y) - model.h_prime(x)
    den = (model.h(x + y) - model.h(x)) ** 2
    return -num / den


def check_h_conditions(model: SpectrumModel, grid_step: float = 1e-3, window: Window | None = None,
                       span: float = 4.0, flat_floor: float = 1e-12) -> HConditionsReport:
    """Grid estimates of the constants in the sufficient conditions on ``h``.

    ``a = inf |h'|`` and the smallest ``b`` with
    ``|d/dx 1/(h(x+y) - h(x))| <= b (1 + 1/|y|)``.  Non-periodic profiles are
    sampled on ``[-span, span]``; periodic ones on the open interval
    ``(-1/2, 1/2)`` away from ``Z + 1/2``.  When ``window`` is given, the
    Diophantine constant of ``omega`` is scanned on it and the resulting
    assumption constant ``c`` is reported.
    """
    periodic = model.periodic
    if periodic:
        xs = _grid(-0.5 + grid_step, 0.5 - grid_step, grid_step)
    else:
        xs = _grid(-span, span, grid_step)
    a = float(np.min(np.abs(model.h_prime(xs))))
    if a < flat_floor:
        raise FlatFunctionError(f"inf |h'| = {a:g} is numerically zero")

    coarse = max(grid_step, (xs[-1] - xs[0]) / 800)
    x2 = _grid(xs[0], xs[-1], coarse)
    X, Y = np.meshgrid(x2, x2, indexing="ij")
    ok = np.abs(Y) > coarse / 2
    if periodic:
        ok &= np.abs(np.abs(fold(X + Y)) - 0.5) > coarse
        ok &= np.abs(Y) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(_inv_gap_derivative(model, X, Y)) / (1.0 + 1.0 / np.abs(Y))
    ratio = np.where(ok & np.isfinite(ratio), ratio, 0.0)
    b = float(ratio.max())

    unit = _grid(-1.0, 1.0, grid_step) if not periodic else xs
    hp_max = float(np.max(np.abs(model.h_prime(unit))))

    C = None
    if window is not None:
        C, _ = diophantine_scan(model.omega, window, model.gamma, periodic=periodic)

    delta1 = None
    c_lemma = None
    if not periodic:
        if C is not None:
            c_lemma = (1.0 + b + C) / a * (2.0 + hp_max)
    else:
        delta1 = _estimate_delta1(model, a, b, coarse)
        a_d = float(np.max(np.abs(model.h_prime(_grid(-delta1, delta1, grid_step)))))
        A_d = max(1.0 / delta1, a_d)
        if C is not None:
            c_lemma = max(A_d / a, b * (A_d + 1.0) / a, 2.0 * A_d / (delta1 * a**2), C / a)
    return HConditionsReport(model.transform, a, b, hp_max, delta1, C, c_lemma)


def _estimate_delta1(model, a, b, step, n=81):
    """Largest ``delta1`` on a grid with ``|G(x,y,z)| <= (b/a)(1 + 1/|z|)`` for ``|y| <= delta1``."""
    g = np.linspace(-0.5 + 1.0 / n, 0.5 - 1.0 / n, n)
    X, Z = np.meshgrid(g, g[np.abs(g) > 1e-12], indexing="ij")
    rhs = (b / a) * (1.0 + 1.0 / np.abs(Z))
    cands = np.linspace(0.45, 0.01, 45)
    good = None
    for delta in cands[::-1]:
        ys = np.linspace(-delta, delta, 21)
        ys = ys[np.abs(ys) > 1e-12]
        worst = 0.0
        for y in ys:
            with np.errstate(divide="ignore", invalid="ignore"):
                G = _G(model, X, y, Z)
            valid = np.isfinite(G)
            near_pole = np.zeros_like(valid)
            for u in (X + y + Z, X + y, X + Z):
                near_pole |= np.abs(np.abs(fold(u)) - 0.5) < 1e-3
            valid &= ~near_pole
            r = np.where(valid, np.abs(G) / rhs, 0.0)
            worst = max(worst, float(r.max()))
        if worst <= 1.0 + 1e-9:
            good = float(delta)
        else:
            break
    return good if good is not None else float(cands[-1])


def _G(model, x, y, z):
    hy = model.h(y) - model.h(0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.transform == TAN_PI:
            # closed form of the bracket for tan: -sin(pi(2x+y+z)) sin(pi y) / sin(pi z) / tan(pi y)
            return -np.sin(np.pi * (2 * x + y + z)) * np.cos(np.pi * y) / np.sin(np.pi * z)
        f1 = 1.0 / (model.h(x + y + z) - model.h(x + y))
        f0 = 1.0 / (model.h(x + z) - model.h(x))
        return (f1 - f0) / hy
