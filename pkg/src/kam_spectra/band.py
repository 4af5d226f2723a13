"""Operators on a window stored by diagonals.

``A_k`` is the sequence ``n -> A_{n, n+k}``, defined on
``{n : n, n + k in window}``.  The decay norm is

    ||A||_alpha = sup_k exp(alpha |k|) ||A_k||_T.

All arithmetic is exact algebra of the truncated matrices: the window is a
finite set, and composing two window operators by diagonals reproduces the
product of their dense exports.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DivergenceError,
    InvalidLossError,
    NeumannPreconditionError,
    SizeError,
)
from .lattice import MultiIndex, as_index, l1_norm, shift_grid, shifted_mask, zero_index
from .talgebra import SpectralGrid, TSequence, t_norm

DENSE_LIMIT = 20000
PRUNE_FLOOR = 1e-16


def q_factor(delta: float, d: int) -> float:
    """``((1 + e^-delta) / (1 - e^-delta))^d``."""
    if delta <= 0:
        raise InvalidLossError(f"loss must be positive, got {delta}")
    e = math.exp(-delta)
    return ((1.0 + e) / (1.0 - e)) ** d


class BandOperator:
    """Window operator as a map ``offset -> diagonal grid``.

    Parameters
    ----------
    grid : SpectralGrid
        Supplies the window and the spectrum used by the T-norm.
    diagonals : mapping
        ``{k: values}`` with window-shaped value grids; entries outside
        ``{n : n, n+k in window}`` are discarded.  All-zero diagonals are
        dropped.
    alpha_hint : float
        Decay rate the operator is believed to carry (informational).
    """

    def __init__(self, grid: SpectralGrid, diagonals: Mapping[MultiIndex, np.ndarray] | None = None,
                 alpha_hint: float = 0.0):
        self.grid = grid
        self.alpha_hint = float(alpha_hint)
        w = grid.window
        diags = {}
        for k, vals in (diagonals or {}).items():
            k = as_index(k, w.d)
            if any(abs(x) > 2 * w.radius for x in k):
                continue
            mask = shifted_mask(w, k)
            v = np.where(mask, np.broadcast_to(np.asarray(vals, dtype=complex), w.grid_shape), 0.0)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"diagonal {k} has non-finite entries")
            if np.any(v != 0):
                v.setflags(write=False)
                diags[k] = v
        self._diags = dict(sorted(diags.items(), key=lambda kv: (l1_norm(kv[0]), kv[0])))

    # -- construction helpers -------------------------------------------------

    @classmethod
    def identity(cls, grid: SpectralGrid) -> "BandOperator":
        return cls(grid, {zero_index(grid.d): np.ones(grid.window.grid_shape)}, math.inf)

    @classmethod
    def zero(cls, grid: SpectralGrid) -> "BandOperator":
        return cls(grid, {}, math.inf)

    @classmethod
    def diagonal(cls, seq: TSequence) -> "BandOperator":
        return cls(seq.grid, {zero_index(seq.grid.d): seq.values}, math.inf)

    @property
    def window(self):
        return self.grid.window

    @property
    def offsets(self) -> list[MultiIndex]:
        return list(self._diags)

    def values(self, k: Sequence[int]) -> np.ndarray:
        """Raw grid of diagonal ``k`` (zeros if not stored)."""
        k = as_index(k, self.grid.d)
        v = self._diags.get(k)
        return np.zeros(self.window.grid_shape, dtype=complex) if v is None else v

    def diagonal_sequence(self, k: Sequence[int]) -> TSequence:
        """``A_k`` as a :class:`TSequence` on ``{n : n, n+k in window}``."""
        k = as_index(k, self.grid.d)
        return TSequence(self.values(k), shifted_mask(self.window, k), self.grid)

    def items(self):
        return self._diags.items()

    def __len__(self):
        return len(self._diags)

    def scale(self) -> float:
        """Largest entry modulus (0 for the zero operator)."""
        return max((float(np.max(np.abs(v))) for v in self._diags.values()), default=0.0)

    def _combine(self, other, sign):
        keys = set(self._diags) | set(other._diags)
        return BandOperator(self.grid, {k: self.values(k) + sign * other.values(k) for k in keys},
                            min(self.alpha_hint, other.alpha_hint))

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, s):
        return BandOperator(self.grid, {k: v * s for k, v in self._diags.items()}, self.alpha_hint)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, other):
        return compose(self, other)

    def minus_identity(self) -> "BandOperator":
        return self - BandOperator.identity(self.grid)

    def pruned(self, floor: float = PRUNE_FLOOR) -> "BandOperator":
        """Drop diagonals whose largest entry is below ``floor`` times the operator scale."""
        s = self.scale()
        keep = {k: v for k, v in self._diags.items() if np.max(np.abs(v)) > floor * s}
        return BandOperator(self.grid, keep, self.alpha_hint)

    def conj_transpose(self) -> "BandOperator":
        """``(A^*)_k[n] = conj(A_{-k}[n + k])``."""
        out = {}
        for k, v in self._diags.items():
            mk = tuple(-x for x in k)
            out[mk] = np.conj(shift_grid(v, mk))
        return BandOperator(self.grid, out, self.alpha_hint)


# -- norms and projections ---------------------------------------------------------


def diagonal_norms(A: BandOperator) -> dict:
    """``{k: ||A_k||_T}`` over stored diagonals."""
    return {k: t_norm(A.diagonal_sequence(k)) for k in A.offsets}


def alpha_norm(A: BandOperator, alpha: float, norms: dict | None = None) -> float:
    """``sup_k exp(alpha |k|) ||A_k||_T``; ``alpha = inf`` is finite only for diagonal operators."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    norms = diagonal_norms(A) if norms is None else norms
    best = 0.0
    for k, nk in norms.items():
        if nk == 0.0:
            continue
        r = l1_norm(k)
        if r == 0:
            best = max(best, nk)
        elif math.isinf(alpha):
            return math.inf
        else:
            best = max(best, math.exp(alpha * r) * nk)
    return best


def alpha_norm_profile(A: BandOperator, alpha: float) -> dict:
    """Per-offset contributions ``exp(alpha |k|) ||A_k||_T``."""
    return {k: math.exp(alpha * l1_norm(k)) * nk for k, nk in diagonal_norms(A).items()}


def diagonal_part(A: BandOperator) -> BandOperator:
    z = zero_index(A.grid.d)
    return BandOperator(A.grid, {z: A.values(z)} if z in A.offsets else {}, math.inf)


def off_diagonal_part(A: BandOperator) -> BandOperator:
    z = zero_index(A.grid.d)
    return BandOperator(A.grid, {k: v for k, v in A.items() if k != z}, A.alpha_hint)


def operator_norm_bound(A: BandOperator, alpha: float) -> float:
    """Upper bound ``q(alpha) ||A||_alpha`` for the l2 operator norm."""
    if math.isinf(alpha):
        return alpha_norm(A, alpha)
    return q_factor(alpha, A.grid.d) * alpha_norm(A, alpha)


# -- composition and inversion -----------------------------------------------------


def _check_loss(alpha, delta):
    if alpha is None or delta is None:
        return
    if not 0 < delta < alpha:
        raise InvalidLossError(f"need 0 < delta < alpha, got delta={delta}, alpha={alpha}")


def compose(X: BandOperator, Y: BandOperator, alpha: float | None = None,
            delta: float | None = None, prune_floor: float = PRUNE_FLOOR) -> BandOperator:
    """Product ``XY`` by diagonals: ``(XY)_k = sum_l X_l * Theta_l Y_{k-l}``.

    ``alpha`` and ``delta`` only validate the loss ``0 < delta < alpha``; the
    product itself does not depend on them.
    """
    _check_loss(alpha, delta)
    grid = X.grid
    w = grid.window
    if not len(X) or not len(Y):
        return BandOperator.zero(grid)
    span = 2 * w.radius
    box = (2 * span + 1,) * w.d
    ym = np.array(Y.offsets)
    ystack = np.stack([Y.values(m) for m in Y.offsets])
    out = np.zeros((int(np.prod(box)),) + w.grid_shape, dtype=complex)
    for l, xl in X.items():
        tgt = ym + np.asarray(l)
        ok = np.all(np.abs(tgt) <= span, axis=1)
        if not ok.any():
            continue
        idx = np.ravel_multi_index(tuple((tgt[ok] + span).T), box)
        out[idx] += xl * shift_grid(ystack[ok], l)
    nz = np.flatnonzero(np.any(out != 0, axis=tuple(range(1, out.ndim))))
    diags = {tuple(int(x) - span for x in np.unravel_index(i, box)): out[i] for i in nz}
    res = BandOperator(grid, diags, min(X.alpha_hint, Y.alpha_hint))
    return res.pruned(prune_floor) if prune_floor else res


def neumann_inverse(X: BandOperator, alpha: float, delta: float, series_tol: float = 1e-15,
                    max_terms: int = 200, check: bool = True) -> BandOperator:
    """``X^{-1} = sum_l (I - X)^l``, stopped once a term's ``(alpha - delta)``-norm
    drops below ``series_tol`` times the first term's.

    With ``check`` the sufficient condition ``||X - I||_alpha < (delta/3)^d``
    is enforced (``0 < delta <= 1``); without it the series is attempted and
    only numerical divergence is reported.
    """
    d = X.grid.d
    N = BandOperator.identity(X.grid) - X
    if check:
        if not 0 < delta <= 1 or not delta < alpha:
            raise InvalidLossError(f"need 0 < delta <= 1 and delta < alpha, got {delta}, {alpha}")
        nx = alpha_norm(N, alpha)
        if not nx < (delta / 3.0) ** d:
            raise NeumannPreconditionError(
                f"||X - I||_alpha = {nx:.3e} is not below (delta/3)^d = {(delta / 3.0) ** d:.3e}"
            )
    a_out = alpha - delta
    total = BandOperator.identity(X.grid)
    term = total
    prev = math.inf
    for _ in range(max_terms):
        term = compose(term, N, prune_floor=0.0)
        if not len(term):
            return total
        tn = alpha_norm(term, a_out)
        if not math.isfinite(tn) or (tn > prev and tn > 1.0):
            raise DivergenceError(f"Neumann series terms grow (norm {tn:.3e})")
        total = total + term
        if tn < series_tol:
            return total
        prev = tn
    raise DivergenceError(f"Neumann series did not reach {series_tol:g} in {max_terms} terms")


def neumann_bound(x_minus_i_norm: float, delta: float, d: int) -> float:
    """``||X - I||_alpha / (1 - (3/delta)^d ||X - I||_alpha)``."""
    return x_minus_i_norm / (1.0 - (3.0 / delta) ** d * x_minus_i_norm)


# -- dense interop -----------------------------------------------------------------


def _positions(A_window, k):
    mask = shifted_mask(A_window, k)
    pos = A_window.position
    rows = pos[mask]
    cols = shift_grid(pos, k, fill=-1)[mask]
    return mask, rows, cols


def to_dense(A: BandOperator) -> np.ndarray:
    """Dense matrix in ``enumerate_window`` order; entry ``(n, m)`` is ``A_{n,m}``."""
    w = A.window
    N = w.size
    if N > DENSE_LIMIT:
        raise SizeError(f"dense export limited to side {DENSE_LIMIT}, window has {N} points")
    M = np.zeros((N, N), dtype=complex)
    for k, v in A.items():
        mask, rows, cols = _positions(w, k)
        M[rows, cols] = v[mask]
    return M


def from_dense(M: np.ndarray, grid: SpectralGrid, alpha_hint: float = 0.0) -> BandOperator:
    w = grid.window
    M = np.asarray(M)
    if M.shape != (w.size, w.size):
        raise SizeError(f"matrix shape {M.shape} does not match window size {w.size}")
    diags = {}
    for k in w.offsets():
        mask, rows, cols = _positions(w, k)
        if not rows.size:
            continue
        vals = M[rows, cols]
        if np.any(vals != 0):
            g = np.zeros(w.grid_shape, dtype=complex)
            g[mask] = vals
            diags[k] = g
    return BandOperator(grid, diags, alpha_hint)


def apply(A: BandOperator, v: np.ndarray) -> np.ndarray:
    """``(Av)_n = sum_k A_{n,n+k} v_{n+k}`` for ``v`` in ``enumerate_window`` order."""
    w = A.window
    v = np.asarray(v)
    vg = np.zeros(w.grid_shape, dtype=complex)
    vg[w.mask] = v
    out = np.zeros(w.grid_shape, dtype=complex)
    for k, a in A.items():
        out += a * shift_grid(vg, k)
    return out[w.mask]
