"""Fixed-step RK4 propagation of linear ODEs on a uniform grid, and Simpson quadrature.

Coefficients are anything exposing ``shape`` and ``sample(t) -> array`` with a
leading time axis. They are sampled exactly at the grid nodes and at the step
midpoints, then handed to compiled RK4 kernels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as _expr
from ._accel import optional_njit

DEFAULT_STEPS = 2048
DIVERGENCE_LIMIT = 1e300


class DivergenceError(FloatingPointError):
    """Propagation produced entries beyond ``DIVERGENCE_LIMIT`` (or non-finite)."""


@dataclass(frozen=True)
class Grid:
    omega: float
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.omega}")
        if self.steps < 2 or self.steps % 2:
            raise ValueError(f"step count must be an even integer >= 2, got {self.steps}")

    @property
    def h(self) -> float:
        return self.omega / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.steps) + 0.5) * self.h


# ---------------------------------------------------------------- coefficients


class TimeMatrix:
    """Matrix whose entries are scalar expressions of ``t``."""

    def __init__(self, entries: Sequence[Sequence]):
        rows = [list(r) for r in entries]
        if not rows or not rows[0]:
            raise ValueError("matrix must have at least one row and one column")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("matrix rows have unequal lengths")
        self.entries = tuple(tuple(_expr.as_expr(e) for e in r) for r in rows)
        self.shape = (len(rows), width)

    @classmethod
    def constant(cls, values) -> "TimeMatrix":
        arr = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(arr.tolist())

    def sample(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size,) + self.shape)
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                out[:, i, j] = _expr.evaluate_array(e, t)
        return out

    def at(self, t: float) -> np.ndarray:
        return self.sample([t])[0]

    def to_strings(self) -> list[list[str]]:
        return [[_expr.to_string(e) for e in row] for row in self.entries]

    def __repr__(self):
        return f"TimeMatrix({self.to_strings()})"


class TimeVector:
    """Vector of scalar expressions of ``t``."""

    def __init__(self, entries: Sequence):
        entries = list(entries)
        if not entries:
            raise ValueError("vector must have at least one entry")
        self.entries = tuple(_expr.as_expr(e) for e in entries)
        self.shape = (len(entries),)

    @classmethod
    def zeros(cls, dim: int) -> "TimeVector":
        return cls([0.0] * dim)

    def sample(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([_expr.evaluate_array(e, t) for e in self.entries], axis=1)

    def at(self, t: float) -> np.ndarray:
        return self.sample([t])[0]

    def to_strings(self) -> list[str]:
        return [_expr.to_string(e) for e in self.entries]

    def __repr__(self):
        return f"TimeVector({self.to_strings()})"


@dataclass(frozen=True)
class SampledFunction:
    """Coefficient defined by a vectorised callable ``fn(t) -> (len(t), *shape)``."""

    shape: tuple
    fn: Callable[[np.ndarray], np.ndarray]

    def sample(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.asarray(self.fn(t), dtype=float)
        return np.broadcast_to(out, (t.size,) + tuple(self.shape)).copy()

    def at(self, t: float) -> np.ndarray:
        return self.sample([t])[0]


@dataclass(frozen=True)
class TabulatedVector:
    """Vector data given at sample times, linearly interpolated in between."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError("values must be (len(times), dim)")
        if times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple:
        return (self.values.shape[1],)

    def sample(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.interp(t, self.times, col) for col in self.values.T], axis=1)

    def at(self, t: float) -> np.ndarray:
        return self.sample([t])[0]


def constant_matrix(values) -> SampledFunction:
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    return SampledFunction(arr.shape, lambda t: np.broadcast_to(arr, (t.size,) + arr.shape))


def zero_vector(dim: int) -> SampledFunction:
    return SampledFunction((dim,), lambda t: np.zeros((t.size, dim)))


def tabulate(coef, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Values at the grid nodes and at the step midpoints (C-contiguous)."""
    nodes = np.ascontiguousarray(coef.sample(grid.nodes), dtype=np.float64)
    mids = np.ascontiguousarray(coef.sample(grid.midpoints), dtype=np.float64)
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(mids))):
        raise _expr.ExprDomainError("coefficient is not finite on the grid")
    return nodes, mids


# ---------------------------------------------------------------- trajectories


def cubic_midpoints(values: np.ndarray) -> np.ndarray:
    """Step-midpoint values from node samples by 4-point Lagrange interpolation.

    Centred stencils inside, one-sided at both ends; falls back to linear
    below three steps.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape[0] < 4:
        return 0.5 * (v[:-1] + v[1:])
    mid = np.empty((v.shape[0] - 1,) + v.shape[1:])
    mid[1:-1] = (9.0 * (v[1:-2] + v[2:-1]) - v[:-3] - v[3:]) / 16.0
    mid[0] = (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0
    mid[-1] = (v[-4] - 5.0 * v[-3] + 15.0 * v[-2] + 5.0 * v[-1]) / 16.0
    return mid


def _hermite(grid: Grid, values: np.ndarray, derivs: np.ndarray | None, t: float) -> np.ndarray:
    if not (-1e-12 <= t <= grid.omega * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, {grid.omega}]")
    x = min(max(t / grid.h, 0.0), grid.steps)
    i = min(int(np.floor(x)), grid.steps - 1)
    s = x - i
    y0, y1 = values[i], values[i + 1]
    if derivs is None:
        return (1 - s) * y0 + s * y1
    h = grid.h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * derivs[i] + h01 * y1 + h11 * h * derivs[i + 1]


@dataclass(frozen=True)
class Trajectory:
    """Samples of a matrix- or vector-valued function at every grid node.

    ``values`` has shape ``(N+1, *shape)``. When ``derivs`` is present,
    :meth:`at` uses cubic Hermite interpolation, otherwise linear.
    """

    grid: Grid
    values: np.ndarray
    derivs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.values.shape[0] != self.grid.steps + 1:
            raise ValueError("trajectory needs one value per grid node")

    @property
    def start(self) -> np.ndarray:
        return self.values[0]

    @property
    def end(self) -> np.ndarray:
        return self.values[-1]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        return _hermite(self.grid, self.values, self.derivs, float(t))

    def midpoint_values(self) -> np.ndarray:
        """Interpolated values at every step midpoint, shape ``(N, *shape)``."""
        if self.derivs is None:
            return cubic_midpoints(self.values)
        mid = 0.5 * (self.values[:-1] + self.values[1:])
        return mid + self.grid.h / 8.0 * (self.derivs[:-1] - self.derivs[1:])

    def __add__(self, other: "Trajectory") -> "Trajectory":
        d = None if self.derivs is None or other.derivs is None else self.derivs + other.derivs
        return Trajectory(self.grid, self.values + other.values, d)

    def __mul__(self, k: float) -> "Trajectory":
        return Trajectory(self.grid, self.values * k, None if self.derivs is None else self.derivs * k)

    __rmul__ = __mul__


MatrixTrajectory = Trajectory
VectorTrajectory = Trajectory


# ---------------------------------------------------------------- kernels


@optional_njit(cache=True)
def rk4_matrix(mn, mm, h, limit):
    """F' = M(t) F, F(0) = E. Returns (F, first bad step or -1)."""
    steps = mm.shape[0]
    d = mn.shape[1]
    out = np.empty((steps + 1, d, d))
    f = np.eye(d)
    out[0] = f
    for i in range(steps):
        k1 = mn[i] @ f
        k2 = mm[i] @ (f + 0.5 * h * k1)
        k3 = mm[i] @ (f + 0.5 * h * k2)
        k4 = mn[i + 1] @ (f + h * k3)
        f = f + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(f) <= limit):
            return out, i
        out[i + 1] = f
    return out, -1


@optional_njit(cache=True)
def rk4_matrix_inverse(mn, mm, h, limit):
    """Psi' = -Psi M(t), Psi(0) = E, so Psi = F^{-1}."""
    steps = mm.shape[0]
    d = mn.shape[1]
    out = np.empty((steps + 1, d, d))
    p = np.eye(d)
    out[0] = p
    for i in range(steps):
        k1 = -(p @ mn[i])
        k2 = -((p + 0.5 * h * k1) @ mm[i])
        k3 = -((p + 0.5 * h * k2) @ mm[i])
        k4 = -((p + h * k3) @ mn[i + 1])
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(p) <= limit):
            return out, i
        out[i + 1] = p
    return out, -1


@optional_njit(cache=True)
def rk4_affine(mn, mm, gn, gm, x0, h, limit):
    """x' = M(t) x + g(t), x(0) = x0."""
    steps = mm.shape[0]
    d = x0.shape[0]
    out = np.empty((steps + 1, d))
    x = x0.copy()
    out[0] = x
    for i in range(steps):
        k1 = mn[i] @ x + gn[i]
        k2 = mm[i] @ (x + 0.5 * h * k1) + gm[i]
        k3 = mm[i] @ (x + 0.5 * h * k2) + gm[i]
        k4 = mn[i + 1] @ (x + h * k3) + gn[i + 1]
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(x) <= limit):
            return out, i
        out[i + 1] = x
    return out, -1


@optional_njit(cache=True)
def rk4_affine_batch(mn, mm, gn, gm, h, limit):
    """Zero-start affine propagation for a batch of forcings ``g[k]``; returns final states."""
    batch = gn.shape[0]
    steps = mm.shape[0]
    d = mn.shape[1]
    ends = np.empty((batch, d))
    traj = np.empty((batch, steps + 1, d))
    for b in range(batch):
        x = np.zeros(d)
        traj[b, 0] = x
        for i in range(steps):
            k1 = mn[i] @ x + gn[b, i]
            k2 = mm[i] @ (x + 0.5 * h * k1) + gm[b, i]
            k3 = mm[i] @ (x + 0.5 * h * k2) + gm[b, i]
            k4 = mn[i + 1] @ (x + h * k3) + gn[b, i + 1]
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            traj[b, i + 1] = x
        ends[b] = x
        if not np.all(np.abs(x) <= limit):
            return traj, ends, b
    return traj, ends, -1


def _check(bad: int, what: str) -> None:
    if bad >= 0:
        raise DivergenceError(f"{what} diverged (|entry| > {DIVERGENCE_LIMIT:g}) at step {bad}")


# ---------------------------------------------------------------- public API


def propagate_fundamental(m, grid: Grid, tab=None) -> Trajectory:
    """Fundamental matrix F(t) with F' = M(t) F, F(0) = E."""
    mn, mm = tab if tab is not None else tabulate(m, grid)
    if mn.shape[1] != mn.shape[2]:
        raise ValueError("coefficient must be square")
    values, bad = rk4_matrix(mn, mm, grid.h, DIVERGENCE_LIMIT)
    _check(bad, "fundamental matrix")
    return Trajectory(grid, values, mn @ values)


def propagate_inverse_fundamental(m, grid: Grid, tab=None) -> Trajectory:
    """Psi(t) = F(t)^{-1}, integrated directly as Psi' = -Psi M(t)."""
    mn, mm = tab if tab is not None else tabulate(m, grid)
    values, bad = rk4_matrix_inverse(mn, mm, grid.h, DIVERGENCE_LIMIT)
    _check(bad, "inverse fundamental matrix")
    return Trajectory(grid, values, -(values @ mn))


def propagate_affine(m, g, x0, grid: Grid, tab=None, gtab=None) -> Trajectory:
    """Solution of x' = M(t) x + g(t), x(0) = x0."""
    mn, mm = tab if tab is not None else tabulate(m, grid)
    gn, gm = gtab if gtab is not None else tabulate(g, grid)
    x0 = np.ascontiguousarray(np.asarray(x0, dtype=np.float64))
    if x0.shape != (mn.shape[1],) or gn.shape[1:] != x0.shape:
        raise ValueError("inconsistent dimensions between M, g and x0")
    values, bad = rk4_affine(mn, mm, gn, gm, x0, grid.h, DIVERGENCE_LIMIT)
    _check(bad, "affine solution")
    derivs = np.einsum("nij,nj->ni", mn, values) + gn
    return Trajectory(grid, values, derivs)


def simpson_weights(grid: Grid) -> np.ndarray:
    w = np.ones(grid.steps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (grid.h / 3.0)


def simpson(values, grid: Grid | None = None, h: float | None = None) -> np.ndarray | float:
    """Composite Simpson rule along the first axis of ``values`` (N+1 samples, N even)."""
    if isinstance(values, Trajectory):
        grid = values.grid
        values = values.values
    values = np.asarray(values, dtype=float)
    n = values.shape[0] - 1
    if n < 2 or n % 2:
        raise ValueError("Simpson's rule needs an even number of intervals")
    if grid is None:
        if h is None:
            raise ValueError("pass a grid or a step size")
        grid = Grid(h * n, n)
    elif grid.steps != n:
        raise ValueError("sample count does not match the grid")
    out = np.tensordot(simpson_weights(grid), values, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def inner(a, b, grid: Grid) -> float:
    """L2 inner product of two vector trajectories (or sample arrays) on the grid."""
    av = a.values if isinstance(a, Trajectory) else np.asarray(a)
    bv = b.values if isinstance(b, Trajectory) else np.asarray(b)
    return float(simpson(np.sum(av * bv, axis=1), grid))


def l2_norm(a, grid: Grid) -> float:
    return float(np.sqrt(max(inner(a, a, grid), 0.0)))
