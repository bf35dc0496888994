"""Linear periodic two-point boundary value problems x' = M(t) x + g(t), x(0) = x(omega).

Shooting: with F the fundamental matrix and q the zero-start particular
solution, every solution is x(t) = F(t) c + q(t) where (E - F(omega)) c = q(omega).
The monodromy defect E - F(omega) may be singular; the minimum-norm c is used
and its nullspace gives the periodic homogeneous solutions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .ode import (
    DIVERGENCE_LIMIT,
    DivergenceError,
    Grid,
    Trajectory,
    propagate_affine,
    propagate_fundamental,
    rk4_affine_batch,
    rk4_matrix,
    tabulate,
    zero_vector,
)

DEFAULT_BVP_TOL = 1e-6
# singular values within this factor of the estimated RK4 error are treated as zero
ERROR_SAFETY = 100.0


@dataclass(frozen=True)
class PeriodicLinearSystem:
    """x' = M(t) x + g(t) on [0, omega] with x(0) = x(omega); ``g=None`` means zero."""

    M: object
    omega: float
    g: object = None

    def __post_init__(self):
        shape = tuple(self.M.shape)
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"coefficient must be square, got {shape}")
        if self.g is not None and tuple(self.g.shape) != (shape[0],):
            raise ValueError(f"forcing has shape {tuple(self.g.shape)}, expected ({shape[0]},)")

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    @property
    def forcing(self):
        return self.g if self.g is not None else zero_vector(self.dim)


@dataclass(frozen=True)
class BvpSolution:
    particular: Trajectory
    kernel_basis: list
    compatibility_residual: float
    solvable: bool
    threshold: float
    monodromy: np.ndarray

    @property
    def kernel_dim(self) -> int:
        return len(self.kernel_basis)


def coarse_monodromy(tab, grid: Grid) -> np.ndarray | None:
    """F(omega) on the half-resolution grid, reusing the tabulated coefficients.

    Its nodes are the even fine nodes and its midpoints the odd ones.
    """
    mn, _ = tab
    if grid.steps < 4:
        return None
    coarse, bad = rk4_matrix(
        np.ascontiguousarray(mn[::2]), np.ascontiguousarray(mn[1::2]), 2 * grid.h, DIVERGENCE_LIMIT
    )
    if bad >= 0:
        raise DivergenceError("fundamental matrix diverged on the half-resolution grid")
    return coarse[-1]


def defect_tolerance(defect: np.ndarray, coarse_defect: np.ndarray | None, rtol: float) -> float:
    """Absolute rank floor for E - F(omega).

    Each singular value is compared with its half-resolution counterpart; the
    difference over 15 estimates its RK4 error. A singular value within
    ERROR_SAFETY of its own error is discretisation noise. Comparing values
    one at a time matters for hyperbolic systems, where the error in F(omega)
    is huge along the growing direction but tiny along the others.
    """
    s = linalg.svd(defect).s
    floor = rtol * max(1.0, float(s[0]))
    if coarse_defect is not None:
        err = np.abs(s - linalg.svd(coarse_defect).s) / 15.0
        noise = s[s <= ERROR_SAFETY * err]
        if noise.size:
            floor = max(floor, float(noise.max()) * (1.0 + 1e-12))
    return floor


class PeriodicSolver:
    """Shooting solver for one coefficient M(t); reusable across many forcings."""

    def __init__(self, M, grid: Grid, rtol: float = linalg.DEFAULT_RTOL, tol: float = DEFAULT_BVP_TOL):
        self.grid = grid
        self.rtol = rtol
        self.tol = tol
        self.tab = tabulate(M, grid)
        self.fundamental = propagate_fundamental(M, grid, tab=self.tab)
        self.dim = self.tab[0].shape[1]
        self.monodromy = self.fundamental.end
        self.defect = np.eye(self.dim) - self.monodromy
        coarse = coarse_monodromy(self.tab, grid)
        self.rank_atol = defect_tolerance(
            self.defect, None if coarse is None else np.eye(self.dim) - coarse, rtol
        )
        self.defect_pinv = linalg.pinv(self.defect, rtol, self.rank_atol)
        self.kernel_initial = linalg.nullspace_basis(self.defect, rtol, self.rank_atol)

    @property
    def kernel_dim(self) -> int:
        return self.kernel_initial.shape[1]

    def kernel_basis(self) -> list[Trajectory]:
        F = self.fundamental
        return [Trajectory(self.grid, F.values @ v, F.derivs @ v) for v in self.kernel_initial.T]

    def _shoot(self, q_end: np.ndarray) -> tuple[np.ndarray, float, float]:
        c = self.defect_pinv @ q_end
        residual = float(np.linalg.norm(self.defect @ c - q_end))
        threshold = self.tol * max(1.0, float(np.linalg.norm(q_end)))
        return c, residual, threshold

    def solve(self, g=None, gtab=None) -> BvpSolution:
        if gtab is None:
            gtab = tabulate(g if g is not None else zero_vector(self.dim), self.grid)
        q = propagate_affine(None, None, np.zeros(self.dim), self.grid, tab=self.tab, gtab=gtab)
        c, residual, threshold = self._shoot(q.end)
        F = self.fundamental
        x = Trajectory(self.grid, F.values @ c + q.values, F.derivs @ c + q.derivs)
        return BvpSolution(
            particular=x,
            kernel_basis=self.kernel_basis(),
            compatibility_residual=residual,
            solvable=residual <= threshold,
            threshold=threshold,
            monodromy=self.monodromy,
        )

    def solve_many(self, gn: np.ndarray, gm: np.ndarray):
        """Particular solutions for a batch of tabulated forcings.

        ``gn`` is (batch, N+1, d), ``gm`` is (batch, N, d). Returns the
        (batch, N+1, d) solutions and a boolean solvability mask.
        """
        mn, mm = self.tab
        traj, ends, bad = rk4_affine_batch(
            mn, mm, np.ascontiguousarray(gn), np.ascontiguousarray(gm), self.grid.h, DIVERGENCE_LIMIT
        )
        if bad >= 0:
            raise DivergenceError(f"affine solution for forcing {bad} diverged")
        cs = ends @ self.defect_pinv.T
        residual = np.linalg.norm(cs @ self.defect.T - ends, axis=1)
        threshold = self.tol * np.maximum(1.0, np.linalg.norm(ends, axis=1))
        x = np.einsum("nij,bj->bni", self.fundamental.values, cs) + traj
        return x, residual <= threshold


def solve_periodic(
    sys: PeriodicLinearSystem,
    grid: Grid,
    rtol: float = linalg.DEFAULT_RTOL,
    tol: float = DEFAULT_BVP_TOL,
) -> BvpSolution:
    """Minimum-norm periodic solution, periodic kernel basis and compatibility verdict."""
    if not np.isclose(grid.omega, sys.omega, rtol=1e-12, atol=0):
        raise ValueError(f"grid horizon {grid.omega} differs from system horizon {sys.omega}")
    return PeriodicSolver(sys.M, grid, rtol, tol).solve(sys.forcing)


def kernel_dimension(sys: PeriodicLinearSystem, grid: Grid, rtol: float = linalg.DEFAULT_RTOL) -> int:
    """Number of independent periodic solutions of the homogeneous equation."""
    return PeriodicSolver(sys.M, grid, rtol).kernel_dim
