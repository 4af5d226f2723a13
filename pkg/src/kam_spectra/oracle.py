"""Brute-force reference: cyclic Jacobi diagonalization of the truncated operator.

The oracle shares nothing with the iterative solver beyond the window
enumeration and the dense export, so agreement between the two is evidence
rather than tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .band import DENSE_LIMIT
from .errors import OracleFailureError, PairingError, SizeError, SymmetryError

MAX_SWEEPS = 50


@dataclass(frozen=True)
class DenseEigResult:
    """Eigenpairs sorted by value; ``order_map[n]`` is the pair best overlapping ``e_n``."""

    values: np.ndarray
    vectors: np.ndarray
    order_map: np.ndarray
    sweeps: int

    def paired_values(self) -> np.ndarray:
        """Eigenvalue assigned to each site (``values[order_map]``)."""
        return self.values[self.order_map]


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index pairs covering every ``(p, q)`` once per sweep (circle method)."""
    m = n + (n % 2)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(idx[: m // 2])
        q = np.array(idx[m // 2:][::-1])
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def dense_symmetric_eig(H, tol: float = 1e-15, max_sweeps: int = MAX_SWEEPS,
                        sym_tol: float = 1e-12) -> DenseEigResult:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in a fixed round-robin
    order; the rotations of one round act on disjoint index pairs and are
    applied together.  Iteration stops when the off-diagonal Frobenius norm
    falls below ``tol * ||H||_F``.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise SymmetryError(f"expected a square matrix, got shape {H.shape}")
    n = H.shape[0]
    if n > DENSE_LIMIT:
        raise SizeError(f"oracle limited to side {DENSE_LIMIT}")
    scale = max(1.0, float(np.max(np.abs(H)))) if n else 1.0
    if np.iscomplexobj(H):
        if np.max(np.abs(H.imag), initial=0.0) > sym_tol * scale:
            raise SymmetryError("complex hermitian input is not supported; matrix must be real")
        H = H.real
    if np.max(np.abs(H - H.T), initial=0.0) > sym_tol * scale:
        raise SymmetryError("matrix is not symmetric")
    A = 0.5 * (H + H.T).astype(float)
    V = np.eye(n)
    fro = np.linalg.norm(A)
    rounds = _round_robin(n) if n > 1 else []
    offdiag = ~np.eye(n, dtype=bool)
    sweeps = 0
    while True:
        # subtracting squared norms cancels catastrophically; mask the diagonal instead
        off = np.linalg.norm(A[offdiag])
        if off <= tol * fro or n < 2:
            break
        if sweeps >= max_sweeps:
            raise OracleFailureError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3e})")
        for p, q in rounds:
            apq = A[p, q]
            # pairs too small to rotate meaningfully are simply dropped
            nz = np.abs(apq) > 1e-300
            if not nz.any():
                continue
            p, q, apq = p[nz], q[nz], apq[nz]
            with np.errstate(over="ignore"):
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.where(np.isinf(tau), 0.0, np.sign(tau) / (np.abs(tau) + np.hypot(1.0, tau)))
            t[tau == 0] = 1.0
            c = 1.0 / np.hypot(1.0, t)
            s = t * c
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
        sweeps += 1
    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    vals, V = vals[order], V[:, order]
    # fix the sign so the largest component of each vector is positive
    big = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[big, np.arange(n)])
    order_map = np.argmax(np.abs(V), axis=1) if n else np.zeros(0, dtype=int)
    return DenseEigResult(vals, V, order_map, sweeps)


@dataclass
class MatchReport:
    max_eig_diff: float
    max_overlap_deficit: float
    per_site: list
    interior_count: int

    def to_dict(self) -> dict:
        return {
            "max_eig_diff": float(self.max_eig_diff),
            "max_overlap_deficit": float(self.max_overlap_deficit),
            "interior_sites": self.interior_count,
        }


def match_spectra(kam_values, kam_vectors, oracle: DenseEigResult, interior=None,
                  points=None, strict: bool = True) -> MatchReport:
    """Pair oracle eigenpairs with lattice sites and compare to the KAM output.

    Parameters
    ----------
    kam_values : array
        ``lambda_n(eps)`` in window order.
    kam_vectors : array
        Normalized KAM eigenvectors as columns (window order).
    interior : bool array, optional
        Sites on which the comparison is made (default: all).
    points : array, optional
        Lattice points, used only to label witnesses.
    strict : bool
        Raise :class:`PairingError` if two interior sites claim the same pair.
    """
    kam_values = np.asarray(kam_values)
    n = kam_values.size
    interior = np.ones(n, dtype=bool) if interior is None else np.asarray(interior, dtype=bool)
    sites = np.flatnonzero(interior)
    claimed = oracle.order_map[sites]
    uniq, counts = np.unique(claimed, return_counts=True)
    dup = uniq[counts > 1]
    if dup.size and strict:
        label = (lambda i: tuple(int(x) for x in points[i])) if points is not None else int
        witnesses = [(int(e), [label(i) for i in sites[claimed == e]]) for e in dup]
        raise PairingError(f"{dup.size} eigenpairs claimed by several sites", witnesses)
    per_site = []
    max_diff = max_def = 0.0
    for i in sites:
        e = oracle.order_map[i]
        diff = abs(float(np.real(kam_values[i])) - oracle.values[e])
        ov = abs(np.vdot(kam_vectors[:, i], oracle.vectors[:, e]))
        deficit = max(0.0, 1.0 - ov)
        per_site.append({"site": int(i), "pair": int(e), "eig_diff": diff, "overlap_deficit": deficit})
        max_diff = max(max_diff, diff)
        max_def = max(max_def, deficit)
    return MatchReport(max_diff, max_def, per_site, int(sites.size))
