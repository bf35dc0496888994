"""Dense SVD, Moore-Penrose pseudoinverse, nullspaces and min-norm solves.

The SVD is a one-sided Jacobi iteration (Hestenes). It is accurate for the
small matrices this package works with and its inner loop is a numba kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import optional_njit

DEFAULT_RTOL = 1e-10


class SvdConvergenceError(RuntimeError):
    pass


@optional_njit(cache=True)
def _jacobi_sweeps(a, v, max_sweeps):
    """Orthogonalise the columns of ``a`` in place, accumulating rotations in ``v``.

    Returns the number of sweeps used, or -1 when ``max_sweeps`` is exhausted.
    """
    m, n = a.shape
    eps = 1e-15
    total = 0.0
    for i in range(m):
        for j in range(n):
            total += a[i, j] * a[i, j]
    # products below (eps*||A||_F)^2 are rounding noise
    floor = eps * eps * total
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += a[i, p] * a[i, p]
                    beta += a[i, q] * a[i, q]
                    gamma += a[i, p] * a[i, q]
                if abs(gamma) <= floor or abs(gamma) <= eps * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    tan = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    tan = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + tan * tan)
                s = c * tan
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q]
                    a[i, p] = c * ap - s * aq
                    a[i, q] = s * ap + c * aq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if not rotated:
            return sweep + 1
    return -1


def _complete_orthonormal(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns of ``u`` not flagged in ``keep`` so that ``u`` is orthonormal."""
    m, k = u.shape
    out = u.copy()
    basis = [out[:, j] for j in range(k) if keep[j]]
    candidates = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        for e in candidates:
            w = e.copy()
            for _ in range(2):
                for b in basis:
                    w -= (b @ w) * b
            norm = np.linalg.norm(w)
            if norm > 1e-8:
                out[:, j] = w / norm
                basis.append(out[:, j])
                break
    return out


def _jacobi_tall(m_: np.ndarray):
    """Thin SVD of a matrix with rows >= cols: (U, s, V) with ``M = U diag(s) V^T``."""
    rows, cols = m_.shape
    a = np.array(m_, dtype=np.float64, order="C", copy=True)
    v = np.eye(cols)
    if cols > 1:
        sweeps = _jacobi_sweeps(a, v, 100 * max(rows, cols))
        if sweeps < 0:
            raise SvdConvergenceError(f"Jacobi SVD did not converge for a {rows}x{cols} matrix")
    s = np.sqrt(np.sum(a * a, axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    a = a[:, order]
    v = v[:, order]
    scale = s[0] if s.size and s[0] > 0 else 1.0
    # columns this small carry no reliable direction; rebuild them instead
    keep = s > 1e-14 * scale
    u = np.zeros_like(a)
    u[:, keep] = a[:, keep] / s[keep]
    u = _complete_orthonormal(u, keep)
    return u, s, v


@dataclass(frozen=True)
class SvdFactors:
    """``M = u @ diag(s) @ vt`` with ``s`` non-increasing."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    rank: int
    rtol: float
    atol: float = 0.0

    @property
    def smax(self) -> float:
        return float(self.s[0]) if self.s.size else 0.0


def _as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def numerical_rank(s: np.ndarray, rtol: float = DEFAULT_RTOL, atol: float = 0.0) -> int:
    """Count singular values above ``max(rtol * s_max, atol)``."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > max(rtol * s[0], atol)))


def svd(m, rtol: float = DEFAULT_RTOL, atol: float = 0.0) -> SvdFactors:
    """Thin singular value decomposition with a relative-tolerance rank.

    ``atol`` is an optional absolute floor, for matrices that may be pure
    rounding or discretisation noise (where ``rtol * s_max`` is meaningless).
    """
    arr = _as_matrix(m)
    rows, cols = arr.shape
    if rows >= cols:
        u, s, v = _jacobi_tall(arr)
    else:
        v, s, u = _jacobi_tall(arr.T)
    return SvdFactors(u=u, s=s, vt=v.T, rank=numerical_rank(s, rtol, atol), rtol=rtol, atol=atol)


def pinv(m, rtol: float = DEFAULT_RTOL, atol: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values <= rtol*s_max count as zero."""
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    f = svd(m, rtol, atol)
    k = f.rank
    return (f.vt[:k].T / f.s[:k]) @ f.u[:, :k].T


def nullspace_basis(m, rtol: float = DEFAULT_RTOL, atol: float = 0.0) -> np.ndarray:
    """Orthonormal basis of N(M) as the columns of a ``cols x nullity`` matrix."""
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    arr = _as_matrix(m)
    rows, cols = arr.shape
    if rows < cols:
        arr = np.vstack([arr, np.zeros((cols - rows, cols))])
    _, s, v = _jacobi_tall(arr)
    rank = numerical_rank(s, rtol, atol)
    return v[:, rank:].copy()


def range_projector(m, rtol: float = DEFAULT_RTOL, atol: float = 0.0) -> np.ndarray:
    """Orthogonal projector ``M M^+`` onto the column space of ``M``."""
    f = svd(m, rtol, atol)
    uk = f.u[:, : f.rank]
    return uk @ uk.T


def solve_min_norm(m, b, rtol: float = DEFAULT_RTOL, atol: float = 0.0) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares solution ``x = M^+ b`` and residual ``||Mx - b||``."""
    arr = _as_matrix(m)
    b = np.asarray(b, dtype=float)
    if b.shape != (arr.shape[0],):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({arr.shape[0]},)")
    x = pinv(arr, rtol, atol) @ b
    return x, float(np.linalg.norm(arr @ x - b))
