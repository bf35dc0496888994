"""Monte-Carlo check of the guaranteed error bound.

An adversary picks an input f with ||f||_2 <= 1, any periodic state x driven
by it, and a zero-mean noise law with int tr R(t, t) dt <= 1. Each noise law
here is eta = sum_j s_j a_j(t) with independent random signs s_j; all 2^J sign
patterns are enumerated, so the empirical mean over draws equals the exact
expectation under that law.

Alongside the random adversaries the sample contains the two targeted ones
that attain the worst case for the optimal and for the perturbed estimator.
Every estimator is scored on the same full sample.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import linalg
from .bvp import DEFAULT_BVP_TOL, PeriodicSolver
from .observer import (
    MinimaxEstimate,
    ObservationSystem,
    _as_functional,
    _check_grid,
    solve_estimator,
)
from .ode import Grid, l2_norm, simpson_weights, tabulate

BOUND_SLACK = 0.05
BOUND_FLOOR = 1e-6
# amplitude multiplier for the kernel component that exposes an unbounded error
KERNEL_BOOST = 100.0


@dataclass(frozen=True)
class BoundCheck:
    """Per-sample mean-square errors of the optimal and the perturbed estimator."""

    sigma_hat: float
    mse_optimal: np.ndarray
    mse_perturbed: np.ndarray
    input_norms: np.ndarray
    noise_traces: np.ndarray
    slack: float = BOUND_SLACK
    floor: float = BOUND_FLOOR

    @property
    def worst_optimal(self) -> float:
        return float(self.mse_optimal.max())

    @property
    def worst_perturbed(self) -> float:
        return float(self.mse_perturbed.max())

    @property
    def bound_holds(self) -> bool:
        return self.worst_optimal <= self.sigma_hat * (1 + self.slack) + self.floor

    @property
    def perturbed_is_worse(self) -> bool:
        return self.worst_perturbed > self.worst_optimal


def _trig_series(rng: np.random.Generator, t: np.ndarray, dim: int, harmonics: int, omega: float) -> np.ndarray:
    """Random trigonometric polynomial with ``dim`` components, sampled at ``t``."""
    k = np.arange(harmonics + 1)
    phase = 2 * np.pi / omega * np.outer(t, k)
    a = rng.standard_normal((harmonics + 1, dim))
    b = rng.standard_normal((harmonics + 1, dim))
    return np.cos(phase) @ a + np.sin(phase) @ b


class _Adversary:
    """Shared, per-system data for drawing admissible adversaries."""

    def __init__(self, sys: ObservationSystem, grid: Grid, rtol: float, tol: float):
        self.sys = sys
        self.grid = grid
        self.weights = simpson_weights(grid)
        self.bn = sys.B.sample(grid.nodes)
        self.bm = sys.B.sample(grid.midpoints)
        self.hn = sys.H.sample(grid.nodes)
        self.state = PeriodicSolver(sys.A, grid, rtol, tol)
        self.kernel = np.array([k.values for k in self.state.kernel_basis()])
        # f must keep B f orthogonal to the periodic adjoint solutions phi_j,
        # i.e. f orthogonal to B' phi_j in L2
        adjoint = PeriodicSolver(sys.adjoint_coefficient(), grid, rtol, tol)
        blocked_n, blocked_m = [], []
        for phi in adjoint.kernel_basis():
            vn = np.einsum("kji,kj->ki", self.bn, phi.values)
            vm = np.einsum("kji,kj->ki", self.bm, phi.midpoint_values())
            for qn, qm in zip(blocked_n, blocked_m):
                c = self._dot(qn, vn)
                vn, vm = vn - c * qn, vm - c * qm
            norm = np.sqrt(self._dot(vn, vn))
            if norm > 1e-8 * max(1.0, l2_norm(phi.values, grid)):
                blocked_n.append(vn / norm)
                blocked_m.append(vm / norm)
        self.blocked = list(zip(blocked_n, blocked_m))

    def _dot(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(self.weights @ np.sum(a * b, axis=1))

    def admissible_input(self, fn: np.ndarray, fm: np.ndarray):
        """Remove the blocked directions and scale to unit L2 norm."""
        for qn, qm in self.blocked:
            c = self._dot(qn, fn)
            fn, fm = fn - c * qn, fm - c * qm
        norm = np.sqrt(self._dot(fn, fn))
        if norm == 0.0:
            return fn, fm
        return fn / norm, fm / norm

    def random_input(self, rng: np.random.Generator, harmonics: int):
        r = self.sys.r
        t = np.concatenate([self.grid.nodes, self.grid.midpoints])
        f = _trig_series(rng, t, r, harmonics, self.grid.omega)
        return self.admissible_input(f[: self.grid.steps + 1], f[self.grid.steps + 1 :])

    def random_noise(self, rng: np.random.Generator, components: int, harmonics: int) -> np.ndarray:
        """(J, N+1, m) noise profiles with sum_j ||a_j||^2 = 1."""
        a = np.array([
            _trig_series(rng, self.grid.nodes, self.sys.m, harmonics, self.grid.omega)
            * rng.uniform(0.1, 1.0)
            for _ in range(components)
        ])
        total = sum(self._dot(x, x) for x in a)
        return a / np.sqrt(total) if total > 0 else a

    def states(self, inputs_n: np.ndarray, inputs_m: np.ndarray) -> np.ndarray:
        gn = np.einsum("kij,bkj->bki", self.bn, inputs_n)
        gm = np.einsum("kij,bkj->bki", self.bm, inputs_m)
        x, ok = self.state.solve_many(gn, gm)
        if not np.all(ok):
            raise linalg.SvdConvergenceError(
                f"{np.count_nonzero(~ok)} adversary inputs lost periodic solvability after projection"
            )
        return x


def _estimator_state(sys: ObservationSystem, ell_tab, u_tab, grid: Grid, rtol: float, tol: float):
    """Periodic z with z' = -A'z + H'u - l, or None when there is none."""
    hn = sys.H.sample(grid.nodes)
    hm = sys.H.sample(grid.midpoints)
    gn = np.einsum("kji,kj->ki", hn, u_tab[0]) - ell_tab[0]
    gm = np.einsum("kji,kj->ki", hm, u_tab[1]) - ell_tab[1]
    sol = PeriodicSolver(sys.adjoint_coefficient(), grid, rtol, tol).solve(gtab=(gn, gm))
    return sol.particular if sol.solvable else None


def _perturbed(u_tab, perturbation: float, adv: _Adversary, grid: Grid, sigma: float):
    """(1 + perturbation) u, or a constant of norm ``perturbation`` when u is negligible."""
    if np.sqrt(adv._dot(u_tab[0], u_tab[0])) > 1e-8 * max(1.0, np.sqrt(sigma)):
        return tuple((1.0 + perturbation) * v for v in u_tab)
    const = np.zeros(adv.sys.m)
    const[0] = perturbation / np.sqrt(grid.omega)
    return tuple(np.broadcast_to(const, v.shape).copy() for v in u_tab)


def guaranteed_bound_check(
    sys: ObservationSystem,
    ell,
    grid: Grid,
    samples: int = 200,
    seed: int = 0,
    perturbation: float = 0.1,
    noise_components: int = 3,
    harmonics: int = 4,
    kernel_amplitude: float = 5.0,
    estimate: MinimaxEstimate | None = None,
    rtol: float = linalg.DEFAULT_RTOL,
    tol: float = DEFAULT_BVP_TOL,
) -> BoundCheck:
    """Score the minimax estimator and a perturbed one on the same admissible adversaries.

    The perturbed kernel is ``(1 + perturbation)`` times the optimal one, or a
    small constant when the optimal kernel vanishes.

    Samples 0 and 1 are the targeted worst cases; the rest are random, each
    drawn from its own generator spawned from ``seed`` so the sample does not
    depend on evaluation order.
    """
    _check_grid(sys, grid)
    if samples < 2:
        raise ValueError("need at least the two targeted samples")
    ell = _as_functional(ell, sys.n)
    est = estimate if estimate is not None else solve_estimator(sys, ell, grid, rtol, tol)
    if not est.estimable:
        raise ValueError("functional is not estimable; its guaranteed error is infinite")
    adv = _Adversary(sys, grid, rtol, tol)
    ell_tab = tabulate(ell, grid)
    u_opt = (est.u_hat.values, np.einsum("kij,kj->ki", sys.H.sample(grid.midpoints), est.p_hat.midpoint_values()))
    u_pert = _perturbed(u_opt, perturbation, adv, grid, est.sigma_hat)

    steps, m = grid.steps, sys.m
    f_n = np.zeros((samples, steps + 1, sys.r))
    f_m = np.zeros((samples, steps, sys.r))
    noise = np.zeros((samples, noise_components, steps + 1, m))
    amplitudes = np.zeros((samples, len(adv.kernel)))
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(samples)]
    for i, rng in enumerate(rngs):
        f_n[i], f_m[i] = adv.random_input(rng, harmonics)
        noise[i] = adv.random_noise(rng, noise_components, harmonics)
        amplitudes[i] = rng.uniform(-kernel_amplitude, kernel_amplitude, size=len(adv.kernel))

    for i, (u, z) in enumerate([(u_opt, est.z_hat), (u_pert, None)]):
        if z is None:
            z = _estimator_state(sys, ell_tab, u, grid, rtol, tol)
        if z is not None:
            bn = np.einsum("kji,kj->ki", adv.bn, z.values)
            bm = np.einsum("kji,kj->ki", adv.bm, z.midpoint_values())
            if adv._dot(bn, bn) > 0:
                f_n[i], f_m[i] = adv.admissible_input(bn, bm)
        elif len(adv.kernel):
            # no periodic adjoint state: the error grows without bound along the
            # kernel direction that u fails to cancel
            h = sys.H.sample(grid.nodes)
            miss = ell_tab[0] - np.einsum("kji,kj->ki", h, u[0])
            gap = np.array([adv._dot(miss, psi) for psi in adv.kernel])
            if np.any(gap):
                amplitudes[i] = KERNEL_BOOST * kernel_amplitude * gap / np.linalg.norm(gap)
        unorm = np.sqrt(adv._dot(u[0], u[0]))
        if unorm > 0:
            noise[i] = 0.0
            noise[i, 0] = u[0] / unorm

    x = adv.states(f_n, f_m)
    if len(adv.kernel):
        x = x + np.einsum("bk,kni->bni", amplitudes, adv.kernel)
    hx = np.einsum("kij,bkj->bki", adv.hn, x)
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=noise_components)))
    w = adv.weights
    ell_x = np.einsum("k,bki,ki->b", w, x, ell_tab[0])

    def mse(u: np.ndarray) -> np.ndarray:
        # error = l(x) - int u.(Hx + sum_j s_j a_j) for every sign pattern s
        det = ell_x - np.einsum("k,ki,bki->b", w, u, hx)
        pair = np.einsum("k,ki,bjki->bj", w, u, noise)
        err = det[:, None] - pair @ signs.T
        return np.mean(err**2, axis=1)

    return BoundCheck(
        sigma_hat=est.sigma_hat,
        mse_optimal=mse(u_opt[0]),
        mse_perturbed=mse(u_pert[0]),
        input_norms=np.sqrt(np.einsum("k,bki->b", w, f_n**2)),
        noise_traces=np.einsum("k,bjki->b", w, noise**2),
    )
