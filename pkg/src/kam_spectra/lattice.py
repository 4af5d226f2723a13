"""Multi-indices of Z^d and the finite windows every supremum runs over.

A window is stored on a dense box grid of side ``2R + 1``; an l1-ball window
uses the same grid with a membership mask.  Grid position ``g`` corresponds
to the lattice point ``g - R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidWindowError

MultiIndex = tuple[int, ...]

BOX = "box"
L1 = "l1"
_SHAPES = (BOX, L1)


def l1_norm(k: Sequence[int]) -> int:
    """Return ``|k_1| + ... + |k_d|``."""
    return int(sum(abs(int(x)) for x in k))


def as_index(k: Iterable[int], d: int | None = None) -> MultiIndex:
    k = tuple(int(x) for x in k)
    if d is not None and len(k) != d:
        raise InvalidWindowError(f"index {k} has dimension {len(k)}, expected {d}")
    return k


def zero_index(d: int) -> MultiIndex:
    return (0,) * d


def default_interior_radius(radius: int, alpha_eff: float) -> int:
    """Interior radius leaving a buffer of ``ceil(4 / alpha_eff)`` sites."""
    if alpha_eff <= 0:
        raise InvalidWindowError("decay rate must be positive")
    return max(0, radius - math.ceil(4.0 / alpha_eff))


@dataclass(frozen=True)
class Window:
    """Finite truncation of Z^d, symmetric about the origin.

    Parameters
    ----------
    d : int
        Lattice dimension (>= 1).
    radius : int
        Box half-width (``shape="box"``) or l1 radius (``shape="l1"``).
    shape : {"box", "l1"}
    interior_radius : int, optional
        Radius of the sub-window on which infinite-lattice claims are
        checked.  Defaults to ``radius`` (no buffer).
    """

    d: int
    radius: int
    shape: str = BOX
    interior_radius: int | None = None

    def __post_init__(self):
        if int(self.d) < 1:
            raise InvalidWindowError(f"dimension must be >= 1, got {self.d}")
        if int(self.radius) < 0:
            raise InvalidWindowError(f"radius must be >= 0, got {self.radius}")
        if self.shape not in _SHAPES:
            raise InvalidWindowError(f"unknown window shape {self.shape!r}")
        if self.interior_radius is None:
            object.__setattr__(self, "interior_radius", int(self.radius))
        if not 0 <= self.interior_radius <= self.radius:
            raise InvalidWindowError(
                f"interior radius {self.interior_radius} outside [0, {self.radius}]"
            )

    @classmethod
    def for_decay(cls, d: int, radius: int, alpha_eff: float, shape: str = BOX) -> "Window":
        return cls(d, radius, shape, default_interior_radius(radius, alpha_eff))

    @property
    def buffer(self) -> int:
        return self.radius - self.interior_radius

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (2 * self.radius + 1,) * self.d

    def _membership(self, radius: int) -> np.ndarray:
        coords = np.indices(self.grid_shape) - self.radius
        if self.shape == BOX:
            return np.all(np.abs(coords) <= radius, axis=0)
        return np.abs(coords).sum(axis=0) <= radius

    @cached_property
    def mask(self) -> np.ndarray:
        m = self._membership(self.radius)
        m.setflags(write=False)
        return m

    @cached_property
    def interior_mask(self) -> np.ndarray:
        m = self._membership(self.interior_radius)
        m.setflags(write=False)
        return m

    @cached_property
    def points(self) -> np.ndarray:
        """Window points, shape ``(N, d)``, in lexicographic order."""
        pts = np.argwhere(self.mask) - self.radius
        pts.setflags(write=False)
        return pts

    @cached_property
    def position(self) -> np.ndarray:
        """Grid of enumeration positions (``-1`` outside the window)."""
        pos = np.full(self.grid_shape, -1, dtype=np.int64)
        pos[self.mask] = np.arange(int(self.mask.sum()))
        pos.setflags(write=False)
        return pos

    @property
    def size(self) -> int:
        return len(self.points)

    def contains(self, n: Sequence[int]) -> bool:
        n = as_index(n, self.d)
        if self.shape == BOX:
            return all(abs(x) <= self.radius for x in n)
        return l1_norm(n) <= self.radius

    def grid_index(self, n: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(x) + self.radius for x in n)

    def offsets(self, kmax: int | None = None, include_zero: bool = True) -> list[MultiIndex]:
        """All offsets ``k`` with a nonempty shifted domain, optionally ``|k| <= kmax``.

        Ordered by l1 norm, then lexicographically.
        """
        span = 2 * self.radius
        ks = np.argwhere(np.ones((2 * span + 1,) * self.d, dtype=bool)) - span
        ks = [tuple(int(x) for x in k) for k in ks]
        out = []
        for k in ks:
            if not include_zero and not any(k):
                continue
            if kmax is not None and l1_norm(k) > kmax:
                continue
            if self.shape == L1 and l1_norm(k) > span:
                continue
            out.append(k)
        out.sort(key=lambda k: (l1_norm(k), k))
        return out


def enumerate_window(window: Window) -> list[MultiIndex]:
    """Window points in deterministic lexicographic order."""
    return [tuple(int(x) for x in p) for p in window.points]


def shift_grid(arr: np.ndarray, k: Sequence[int], fill=0) -> np.ndarray:
    """Return ``out`` with ``out[n] = arr[n + k]`` (``fill`` where ``n + k`` leaves the grid).

    Leading axes beyond the last ``len(k)`` are treated as batch axes.
    """
    d = len(k)
    batch = arr.ndim - d
    out = np.full_like(arr, fill)
    src = [slice(None)] * batch
    dst = [slice(None)] * batch
    for axis, kk in enumerate(k):
        size = arr.shape[batch + axis]
        kk = int(kk)
        if abs(kk) >= size:
            return out
        if kk >= 0:
            src.append(slice(kk, size))
            dst.append(slice(0, size - kk))
        else:
            src.append(slice(0, size + kk))
            dst.append(slice(-kk, size))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def shifted_mask(window: Window, k: Sequence[int], domain: np.ndarray | None = None) -> np.ndarray:
    """Boolean grid of ``{n in window : n + k in domain}`` (domain defaults to the window)."""
    base = window.mask if domain is None else domain
    return window.mask & shift_grid(base, k, fill=False)


def shifted_domain(window: Window, k: Sequence[int]) -> set[MultiIndex]:
    """``{n in window : n + k in window}`` as a set of multi-indices."""
    m = shifted_mask(window, as_index(k, window.d))
    return {tuple(int(x) for x in p) for p in np.argwhere(m) - window.radius}
