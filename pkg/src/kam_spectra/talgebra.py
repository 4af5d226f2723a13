"""Sequences weighted by the unperturbed spectrum and their T-norm.

For a sequence ``a`` on a subset of a window,

    ||a||_T = sup_n |a_n| + sup_{n, j != 0} |a_{n+j} - a_n| / |lambda_{p+j} - lambda_p|,

where ``p`` is the model's base point and both ``n`` and ``n + j`` range over
the domain of ``a``.  The double supremum is evaluated exhaustively.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    EmptyProductError,
    EmptyShiftError,
    InvalidOffsetError,
    NearDegeneracyError,
)
from .lattice import Window, as_index, shift_grid, shifted_mask

DENOM_FLOOR = 1e-12
_CACHE_SIZE = 512


class SpectralGrid:
    """Eigenvalues of a model laid out on a window, plus cached norm weights.

    Parameters
    ----------
    model : SpectrumModel
    window : Window
    denom_floor : float
        Relative floor; gaps below ``denom_floor * scale`` count as degenerate,
        where ``scale = max(1, max |lambda_n|)`` over the window.
    """

    def __init__(self, model, window: Window, denom_floor: float = DENOM_FLOOR):
        if model.d != window.d:
            raise ValueError(f"model dimension {model.d} != window dimension {window.d}")
        self.model = model
        self.window = window
        self.lam = model.grid_eigenvalues(window)
        self.lam.setflags(write=False)
        self.scale = max(1.0, float(np.max(np.abs(self.lam[window.mask]))))
        self.floor = denom_floor * self.scale
        self.denom_floor = denom_floor
        span = 2 * window.radius
        diffs = np.argwhere(np.ones((2 * span + 1,) * window.d, dtype=bool)) - span
        gaps = model.base_gaps(diffs).reshape((2 * span + 1,) * window.d)
        zero = (span,) * window.d
        absg = np.abs(gaps)
        absg[zero] = np.inf
        # weights for the divided differences; +inf marks a degenerate denominator
        with np.errstate(divide="ignore"):
            self._inv_gap = np.where(absg < self.floor, np.inf, 1.0 / absg)
        self._inv_gap[zero] = 0.0
        self._weights: OrderedDict = OrderedDict()
        self._gaps: dict = {}

    @property
    def d(self) -> int:
        return self.window.d

    def base_gap_grid(self) -> np.ndarray:
        """``1 / |lambda_{p+j} - lambda_p|`` on the difference box ``[-2R, 2R]^d``."""
        return self._inv_gap

    def gap(self, k: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Gap grid ``lambda_{n+k} - lambda_n`` and its domain mask (cached)."""
        k = as_index(k, self.d)
        if k not in self._gaps:
            g, m = self.model.grid_gaps(self.window, k)
            g.setflags(write=False)
            self._gaps[k] = (g, m)
        return self._gaps[k]

    def pair_weights(self, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices of ``mask`` and the matrix ``1/|lambda_{j} - lambda_0|``, ``j = n' - n``."""
        key = mask.tobytes()
        hit = self._weights.get(key)
        if hit is not None:
            self._weights.move_to_end(key)
            return hit
        pts = np.argwhere(mask)
        span = 2 * self.window.radius
        diff = pts[None, :, :] - pts[:, None, :] + span
        w = self._inv_gap[tuple(np.moveaxis(diff, -1, 0))]
        if np.isinf(w).any():
            i, j = np.argwhere(np.isinf(w))[0]
            raise DegenerateSpectrumError(
                f"|lambda_j - lambda_0| below floor {self.floor:g} for j={tuple(pts[j] - pts[i])}"
            )
        flat = np.flatnonzero(mask)
        self._weights[key] = (flat, w)
        if len(self._weights) > _CACHE_SIZE:
            self._weights.popitem(last=False)
        return flat, w

    def sequence(self, values, domain: np.ndarray | None = None) -> "TSequence":
        """Wrap a window-shaped grid (or a constant) as a :class:`TSequence`."""
        mask = self.window.mask if domain is None else domain
        vals = np.zeros(self.window.grid_shape, dtype=complex)
        vals[mask] = np.broadcast_to(np.asarray(values, dtype=complex), self.window.grid_shape)[mask] \
            if np.ndim(values) else complex(values)
        return TSequence(vals, mask, self)

    def eigenvalue_sequence(self) -> "TSequence":
        return TSequence(self.lam.astype(complex), self.window.mask, self)


@dataclass(frozen=True, eq=False)
class TSequence:
    """Complex sequence on a subset of a window, tied to a :class:`SpectralGrid`.

    ``values`` is a full window-shaped grid; entries outside ``domain`` are
    ignored (and kept at zero).
    """

    values: np.ndarray
    domain: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        dom = np.asarray(self.domain, dtype=bool) & self.grid.window.mask
        if vals.shape != self.grid.window.grid_shape:
            raise ValueError(f"values shape {vals.shape} != grid {self.grid.window.grid_shape}")
        if not dom.any():
            raise EmptyShiftError("sequence domain is empty")
        if not np.all(np.isfinite(vals[dom])):
            raise ValueError("sequence has non-finite values")
        vals = np.where(dom, vals, 0.0)
        vals.setflags(write=False)
        dom.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "domain", dom)

    def __getitem__(self, n) -> complex:
        g = self.grid.window.grid_index(n)
        if not self.domain[g]:
            raise KeyError(f"{tuple(n)} outside the sequence domain")
        return complex(self.values[g])

    def entries(self) -> np.ndarray:
        """Values on the domain, in lexicographic order of the points."""
        return self.values[self.domain]

    def points(self) -> np.ndarray:
        return np.argwhere(self.domain) - self.grid.window.radius

    def sup(self) -> float:
        return float(np.max(np.abs(self.entries())))

    def restrict(self, mask: np.ndarray) -> "TSequence":
        return TSequence(self.values, self.domain & mask, self.grid)

    def __add__(self, other: "TSequence") -> "TSequence":
        return TSequence(self.values + other.values, self.domain & other.domain, self.grid)

    def __sub__(self, other: "TSequence") -> "TSequence":
        return TSequence(self.values - other.values, self.domain & other.domain, self.grid)

    def __mul__(self, s) -> "TSequence":
        if isinstance(s, TSequence):
            return pointwise_product(self, s)
        return TSequence(self.values * s, self.domain, self.grid)

    __rmul__ = __mul__

    def __neg__(self) -> "TSequence":
        return TSequence(-self.values, self.domain, self.grid)


def difference_part(a: TSequence) -> float:
    """``sup |a_{n+j} - a_n| / |lambda_j - lambda_0|`` over in-domain pairs."""
    flat, w = a.grid.pair_weights(a.domain)
    v = a.values.reshape(-1)[flat]
    if v.size < 2:
        return 0.0
    return float(np.max(np.abs(v[None, :] - v[:, None]) * w))


def t_norm(a: TSequence) -> float:
    """The T-norm ``sup|a| + difference_part(a)`` (exhaustive double supremum)."""
    return a.sup() + difference_part(a)


def shift(a: TSequence, k: Sequence[int]) -> TSequence:
    """``(Theta_k a)_n = a_{n+k}`` on ``{n in window : n + k in domain(a)}``."""
    k = as_index(k, a.grid.d)
    dom = shifted_mask(a.grid.window, k, a.domain)
    if not dom.any():
        raise EmptyShiftError(f"shift by {k} leaves an empty domain")
    return TSequence(shift_grid(a.values, k), dom, a.grid)


def pointwise_product(a: TSequence, b: TSequence) -> TSequence:
    dom = a.domain & b.domain
    if not dom.any():
        raise EmptyProductError("sequences have disjoint domains")
    return TSequence(a.values * b.values, dom, a.grid)


def reciprocal_difference(grid: SpectralGrid, k: Sequence[int],
                          correction: TSequence | None = None) -> TSequence:
    """``1 / (lambda_{n+k} + v_{n+k} - lambda_n - v_n)`` on ``{n, n+k}`` in the domain.

    Gaps of the unperturbed part come from the model's closed forms, so
    the correction is added to an accurately computed difference.
    """
    k = as_index(k, grid.d)
    if not any(k):
        raise InvalidOffsetError("reciprocal difference needs k != 0")
    g, mask = grid.gap(k)
    g = g.astype(complex)
    if correction is not None:
        mask = mask & correction.domain & shift_grid(correction.domain, k, fill=False)
        g = g + shift_grid(correction.values, k) - correction.values
    if not mask.any():
        raise EmptyShiftError(f"no n with n and n+{k} in the domain")
    absg = np.abs(g[mask])
    if absg.min() < grid.floor:
        n = np.argwhere(mask)[np.argmin(absg)] - grid.window.radius
        raise NearDegeneracyError(
            f"gap at n={tuple(int(x) for x in n)}, k={k} is {absg.min():.3g} < floor {grid.floor:.3g}"
        )
    out = np.zeros(grid.window.grid_shape, dtype=complex)
    out[mask] = 1.0 / g[mask]
    return TSequence(out, mask, grid)
