"""Reference solvers built independently of the package's shooting code."""
from __future__ import annotations

import numpy as np


def collocation_periodic(coef, forcing, omega: float, steps: int, with_residual: bool = False):
    """Dense Hermite-Simpson discretisation of w' = C(t) w + g(t), w(0) = w(omega).

    ``coef(t)`` returns (len(t), d, d) and ``forcing(t)`` returns (len(t), d).
    Unknowns are w at the nodes 0..N-1 (w_N is identified with w_0) and at the
    midpoints. The square system is solved by minimum-norm least squares.
    Returns (nodes, w at the N+1 nodes), plus the relative least-squares
    residual when ``with_residual`` is set.
    """
    h = omega / steps
    t = np.linspace(0.0, omega, steps + 1)
    tm = t[:-1] + h / 2
    C, Cm = coef(t), coef(tm)
    g, gm = forcing(t), forcing(tm)
    d = C.shape[1]
    eye = np.eye(d)
    size = 2 * steps * d
    K = np.zeros((size, size))
    rhs = np.zeros(size)

    def node(k):
        return slice((k % steps) * d, (k % steps + 1) * d)

    def mid(k):
        return slice((steps + k) * d, (steps + k + 1) * d)

    row = 0
    for k in range(steps):
        r = slice(row, row + d)
        # Simpson: w_{k+1} - w_k = h/6 (f_k + 4 f_m + f_{k+1})
        K[r, node(k + 1)] += eye - h / 6 * C[k + 1]
        K[r, node(k)] += -eye - h / 6 * C[k]
        K[r, mid(k)] += -4 * h / 6 * Cm[k]
        rhs[r] = h / 6 * (g[k] + 4 * gm[k] + g[k + 1])
        row += d
        r = slice(row, row + d)
        # Hermite midpoint: w_m = (w_k + w_{k+1})/2 + h/8 (f_k - f_{k+1})
        K[r, mid(k)] += eye
        K[r, node(k)] += -0.5 * eye - h / 8 * C[k]
        K[r, node(k + 1)] += -0.5 * eye + h / 8 * C[k + 1]
        rhs[r] = h / 8 * (g[k] - g[k + 1])
        row += d
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    w = sol[: steps * d].reshape(steps, d)
    w = np.vstack([w, w[:1]])
    if with_residual:
        return t, w, float(np.linalg.norm(K @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return t, w


def coupled_coefficient(A, B, H):
    """[[-A', H'H], [BB', A]] from callables A(t), B(t), H(t) returning stacked matrices."""

    def coef(t):
        a, b, hh = A(t), B(t), H(t)
        top = np.concatenate([-np.swapaxes(a, 1, 2), np.swapaxes(hh, 1, 2) @ hh], axis=2)
        bottom = np.concatenate([b @ np.swapaxes(b, 1, 2), a], axis=2)
        return np.concatenate([top, bottom], axis=1)

    return coef


def simpson(values: np.ndarray, omega: float) -> np.ndarray:
    """Composite Simpson along axis 0, written out directly."""
    n = values.shape[0] - 1
    h = omega / n
    return h / 3 * (values[0] + values[-1] + 4 * values[1:-1:2].sum(axis=0) + 2 * values[2:-1:2].sum(axis=0))
