"""Minimax observation of periodic linear systems.

System and observation::

    x'(t) - A(t) x(t) = B(t) f(t),   x(0) = x(omega)
    y(t) = H(t) x(t) + eta(t)

A functional ``l(x) = int (l(t), x(t)) dt`` is estimated by ``u(y) = int (u(t), y(t)) dt``.
Its guaranteed error is finite iff ``P h(omega)`` is orthogonal to the nullspace
of the projected Gramian ``W``; then the optimal kernel is ``u = H p`` where
``(z, p)`` solves the coupled periodic problem

    z' = -A' z + H'H p - l,     p' = A p + B B' z.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .bvp import DEFAULT_BVP_TOL, PeriodicSolver
from .ode import (
    Grid,
    SampledFunction,
    TimeMatrix,
    TimeVector,
    Trajectory,
    inner,
    l2_norm,
    propagate_affine,
    propagate_inverse_fundamental,
    simpson,
    tabulate,
)

log = logging.getLogger(__name__)

DEFAULT_FEAS_TOL = 1e-6
SIGMA_NEGATIVE_TOL = 1e-8


class IncompatibleProblem(ValueError):
    """A periodic problem that must be solvable turned out not to be."""


class NumericalConsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ObservationSystem:
    """The triple (A, B, H) on [0, omega]; A is n x n, B is n x r, H is m x n."""

    A: object
    B: object
    H: object
    omega: float

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {self.B.shape}")
        if self.H.shape[1] != n:
            raise ValueError(f"H must have {n} columns, got {self.H.shape}")
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive, got {self.omega}")

    @classmethod
    def from_strings(cls, A, B, H, omega: float) -> "ObservationSystem":
        return cls(TimeMatrix(A), TimeMatrix(B), TimeMatrix(H), float(omega))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def adjoint_coefficient(self) -> SampledFunction:
        """-A'(t), the coefficient of z' = -A'(t) z."""
        A = self.A
        return SampledFunction((self.n, self.n), lambda t: -np.swapaxes(A.sample(t), 1, 2))

    def coupled_coefficient(self) -> SampledFunction:
        """[[-A', H'H], [BB', A]]: shared by the estimator and reconstruction problems."""
        A, B, H, n = self.A, self.B, self.H, self.n

        def fn(t):
            a = A.sample(t)
            b = B.sample(t)
            h = H.sample(t)
            out = np.empty((t.size, 2 * n, 2 * n))
            out[:, :n, :n] = -np.swapaxes(a, 1, 2)
            out[:, :n, n:] = np.swapaxes(h, 1, 2) @ h
            out[:, n:, :n] = b @ np.swapaxes(b, 1, 2)
            out[:, n:, n:] = a
            return out

        return SampledFunction((2 * n, 2 * n), fn)

    def coupled_adjoint_coefficient(self) -> SampledFunction:
        """-C(t)' for C the coupled coefficient: [[A, -BB'], [-H'H, -A']]."""
        C = self.coupled_coefficient()
        return SampledFunction(C.shape, lambda t: -np.swapaxes(C.sample(t), 1, 2))


def _as_functional(ell, n: int):
    if isinstance(ell, (list, tuple)):
        ell = TimeVector(ell)
    if tuple(ell.shape) != (n,):
        raise ValueError(f"functional has shape {tuple(ell.shape)}, expected ({n},)")
    return ell


def _check_grid(sys: ObservationSystem, grid: Grid) -> None:
    if not np.isclose(grid.omega, sys.omega, rtol=1e-12, atol=0):
        raise ValueError(f"grid horizon {grid.omega} differs from system horizon {sys.omega}")


# ---------------------------------------------------------------- feasibility


@dataclass(frozen=True)
class AdjointPropagation:
    """Phi(t, 0) for z' = -A' z, its inverse, and the projector P."""

    phi: Trajectory
    phi_inv: Trajectory
    P: np.ndarray
    rank_atol: float


def _adjoint_propagation(sys: ObservationSystem, grid: Grid, rtol: float) -> AdjointPropagation:
    _check_grid(sys, grid)
    coef = sys.adjoint_coefficient()
    solver = PeriodicSolver(coef, grid, rtol)
    phi = solver.fundamental
    phi_inv = propagate_inverse_fundamental(coef, grid, tab=solver.tab)
    # P = E - M M^+ with M = E - Phi(omega, 0)
    P = np.eye(sys.n) - linalg.range_projector(solver.defect, rtol, solver.rank_atol)
    return AdjointPropagation(phi, phi_inv, P, solver.rank_atol)


def compute_P(sys: ObservationSystem, grid: Grid, rtol: float = linalg.DEFAULT_RTOL) -> np.ndarray:
    """Orthogonal projector onto N((E - Phi(omega,0))')."""
    return _adjoint_propagation(sys, grid, rtol).P


def _gramian(sys: ObservationSystem, grid: Grid, adj: AdjointPropagation, P: np.ndarray):
    """W and the bound int |P Phi(omega,s)|_F^2 |H(s)|_F^2 ds >= trace W."""
    # Phi(omega, s) = Phi(omega, 0) Phi(s, 0)^{-1}
    h = sys.H.sample(grid.nodes)
    transfer = P @ adj.phi.end @ adj.phi_inv.values
    K = transfer @ np.swapaxes(h, 1, 2)
    W = simpson(K @ np.swapaxes(K, 1, 2), grid)
    bound = float(simpson(np.sum(transfer**2, axis=(1, 2)) * np.sum(h**2, axis=(1, 2)), grid))
    return 0.5 * (W + W.T), bound


def compute_W(sys: ObservationSystem, grid: Grid, rtol: float = linalg.DEFAULT_RTOL) -> np.ndarray:
    """W(0, omega) = int P Phi(omega,s) H'(s) H(s) Phi'(omega,s) P ds, symmetrised."""
    adj = _adjoint_propagation(sys, grid, rtol)
    return _gramian(sys, grid, adj, adj.P)[0]


def compute_h(sys: ObservationSystem, ell, grid: Grid) -> Trajectory:
    """h' = -A' h + l, h(0) = 0."""
    _check_grid(sys, grid)
    ell = _as_functional(ell, sys.n)
    return propagate_affine(sys.adjoint_coefficient(), ell, np.zeros(sys.n), grid)


@dataclass(frozen=True)
class FeasibilityReport:
    P: np.ndarray
    W: np.ndarray
    h_end: np.ndarray
    Ph_end: np.ndarray
    W_nullspace: np.ndarray
    defect: float
    threshold: float
    feasible: bool


def check_feasibility(
    sys: ObservationSystem,
    ell,
    grid: Grid,
    rtol: float = linalg.DEFAULT_RTOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
) -> FeasibilityReport:
    """Decide whether P h(omega) is orthogonal to N(W(0, omega))."""
    ell = _as_functional(ell, sys.n)
    adj = _adjoint_propagation(sys, grid, rtol)
    W, bound = _gramian(sys, grid, adj, adj.P)
    # judged against an upper bound on trace W, which stays meaningful when W is all noise
    null = linalg.nullspace_basis(W, rtol, rtol * bound)
    h_end = compute_h(sys, ell, grid).end
    Ph = adj.P @ h_end
    defect = float(np.max(np.abs(null.T @ Ph))) if null.shape[1] else 0.0
    threshold = feas_tol * max(1.0, float(np.linalg.norm(h_end)))
    return FeasibilityReport(
        P=adj.P,
        W=W,
        h_end=h_end,
        Ph_end=Ph,
        W_nullspace=null,
        defect=defect,
        threshold=threshold,
        feasible=defect <= threshold,
    )


def _orthonormalize(trajs: list[np.ndarray], grid: Grid) -> list[np.ndarray]:
    """Modified Gram-Schmidt in L2 on the grid; drops numerically dependent members."""
    out: list[np.ndarray] = []
    for v in trajs:
        w = v.copy()
        norm0 = l2_norm(w, grid)
        for b in out:
            w = w - inner(b, w, grid) * b
        norm = l2_norm(w, grid)
        if norm > 1e-8 * max(norm0, 1e-300):
            out.append(w / norm)
    return out


@dataclass(frozen=True)
class OracleVerdict:
    feasible: bool
    defect: float
    threshold: float
    kernel_dim: int
    kernel_basis: list


def feasibility_oracle_report(
    sys: ObservationSystem,
    ell,
    grid: Grid,
    rtol: float = linalg.DEFAULT_RTOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
) -> OracleVerdict:
    """Fredholm check of the coupled problem against its adjoint periodic kernel.

    The coupled problem w' = C(t) w + (-l, 0) has a periodic solution iff the
    forcing is L2-orthogonal to every periodic solution of v' = -C(t)' v.
    """
    _check_grid(sys, grid)
    ell = _as_functional(ell, sys.n)
    n = sys.n
    solver = PeriodicSolver(sys.coupled_adjoint_coefficient(), grid, rtol)
    basis = _orthonormalize([k.values for k in solver.kernel_basis()], grid)
    forcing = np.zeros((grid.steps + 1, 2 * n))
    forcing[:, :n] = -ell.sample(grid.nodes)
    pairings = [abs(inner(forcing, v, grid)) for v in basis]
    defect = max(pairings, default=0.0)
    threshold = feas_tol * max(1.0, l2_norm(forcing, grid))
    return OracleVerdict(defect <= threshold, defect, threshold, len(basis), basis)


def feasibility_oracle(sys: ObservationSystem, ell, grid: Grid, rtol: float = linalg.DEFAULT_RTOL) -> bool:
    return feasibility_oracle_report(sys, ell, grid, rtol).feasible


# ---------------------------------------------------------------- estimator


@dataclass(frozen=True)
class MinimaxEstimate:
    """Solution of the estimator problem; ``sigma_hat`` is ``inf`` when l is not estimable."""

    estimable: bool
    sigma_hat: float
    z_hat: Trajectory | None = None
    p_hat: Trajectory | None = None
    u_hat: Trajectory | None = None
    kernel_basis: list = field(default_factory=list)
    compatibility_residual: float = 0.0
    notes: tuple = ()


def _clamp_sigma(sigma: float) -> tuple[float, tuple]:
    if sigma >= 0:
        return sigma, ()
    if sigma >= -SIGMA_NEGATIVE_TOL:
        return 0.0, (f"sigma_hat {sigma:.3e} clamped to 0",)
    raise NumericalConsistencyError(f"minimax error came out negative ({sigma:.3e})")


def solve_estimator(
    sys: ObservationSystem,
    ell,
    grid: Grid,
    rtol: float = linalg.DEFAULT_RTOL,
    tol: float = DEFAULT_BVP_TOL,
) -> MinimaxEstimate:
    """Minimax estimator kernel u = H p and guaranteed error sigma = int (l, p)."""
    _check_grid(sys, grid)
    ell = _as_functional(ell, sys.n)
    n = sys.n
    solver = PeriodicSolver(sys.coupled_coefficient(), grid, rtol, tol)
    lt = tabulate(ell, grid)
    gtab = tuple(np.concatenate([-v, np.zeros_like(v)], axis=1) for v in lt)
    sol = solver.solve(gtab=gtab)
    if not sol.solvable:
        return MinimaxEstimate(
            estimable=False,
            sigma_hat=math.inf,
            kernel_basis=sol.kernel_basis,
            compatibility_residual=sol.compatibility_residual,
        )
    w = sol.particular
    z = Trajectory(grid, w.values[:, :n], w.derivs[:, :n])
    p = Trajectory(grid, w.values[:, n:], w.derivs[:, n:])
    h = sys.H.sample(grid.nodes)
    u = Trajectory(grid, np.einsum("kij,kj->ki", h, p.values))
    sigma, notes = _clamp_sigma(inner(lt[0], p.values, grid))
    return MinimaxEstimate(
        estimable=True,
        sigma_hat=sigma,
        z_hat=z,
        p_hat=p,
        u_hat=u,
        kernel_basis=sol.kernel_basis,
        compatibility_residual=sol.compatibility_residual,
        notes=notes,
    )


# ---------------------------------------------------------------- reconstruction


def _observation_samples(y, grid: Grid, m: int):
    """Node and midpoint samples of an observation given in any supported form."""
    if isinstance(y, np.ndarray):
        if y.shape != (grid.steps + 1, m):
            raise ValueError(f"sampled observation must be ({grid.steps + 1}, {m}), got {y.shape}")
        y = Trajectory(grid, np.asarray(y, dtype=np.float64))
    if isinstance(y, Trajectory):
        if y.values.shape[1:] != (m,):
            raise ValueError(f"observation has dimension {y.values.shape[1:]}, expected {(m,)}")
        # node samples only: midpoints need a fourth-order rule to keep RK4 accuracy
        return np.ascontiguousarray(y.values), np.ascontiguousarray(y.midpoint_values())
    if isinstance(y, (list, tuple)):
        y = TimeVector(y)
    if tuple(y.shape) != (m,):
        raise ValueError(f"observation has dimension {y.shape}, expected {m}")
    return tabulate(y, grid)


@dataclass(frozen=True)
class StateEstimate:
    p_hat: Trajectory
    x_hat: Trajectory
    kernel_basis: list
    compatibility_residual: float
    functional_value: float | None = None


def solve_reconstruction(
    sys: ObservationSystem,
    y,
    grid: Grid,
    ell=None,
    rtol: float = linalg.DEFAULT_RTOL,
    tol: float = DEFAULT_BVP_TOL,
) -> StateEstimate:
    """Minimum-norm solution (p, x) of the reconstruction problem driven by y.

    p' = -A' p + H'H x - H' y,   x' = A x + B B' p,   periodic in both.
    """
    _check_grid(sys, grid)
    n = sys.n
    yn, ym = _observation_samples(y, grid, sys.m)
    hn = sys.H.sample(grid.nodes)
    hm = sys.H.sample(grid.midpoints)

    def forcing(h, yv):
        g = np.zeros((yv.shape[0], 2 * n))
        g[:, :n] = -np.einsum("kji,kj->ki", h, yv)
        return g

    solver = PeriodicSolver(sys.coupled_coefficient(), grid, rtol, tol)
    sol = solver.solve(gtab=(forcing(hn, yn), forcing(hm, ym)))
    if not sol.solvable:
        raise IncompatibleProblem(
            f"reconstruction problem is not solvable (residual {sol.compatibility_residual:.3e} "
            f"> {sol.threshold:.3e}); the observation is outside the admissible range"
        )
    w = sol.particular
    x_hat = Trajectory(grid, w.values[:, n:], w.derivs[:, n:])
    value = None
    if ell is not None:
        value = functional_value(_as_functional(ell, n), x_hat, grid)
    return StateEstimate(
        p_hat=Trajectory(grid, w.values[:, :n], w.derivs[:, :n]),
        x_hat=x_hat,
        kernel_basis=sol.kernel_basis,
        compatibility_residual=sol.compatibility_residual,
        functional_value=value,
    )


def functional_value(ell, x_hat, grid: Grid) -> float:
    """int (l(t), x_hat(t)) dt by Simpson's rule."""
    lv = ell.sample(grid.nodes) if hasattr(ell, "sample") else np.asarray(ell)
    return inner(lv, x_hat, grid)


# ---------------------------------------------------------------- observability


@dataclass(frozen=True)
class ObservabilityReport:
    kernel_dim: int
    kernel_basis: list
    gram: np.ndarray
    rank: int
    fully_estimable: bool
    observed_energy: np.ndarray  # eigenvalues of the Gram matrix, ascending
    directions: np.ndarray  # matching eigenvectors, as coefficients on kernel_basis


def observability_diagnostic(
    sys: ObservationSystem, grid: Grid, rtol: float = linalg.DEFAULT_RTOL
) -> ObservabilityReport:
    """Linear independence of {H psi_k} over the periodic kernel {psi_k} of x' = A x."""
    _check_grid(sys, grid)
    solver = PeriodicSolver(sys.A, grid, rtol)
    basis = solver.kernel_basis()
    k = len(basis)
    if k == 0:
        empty = np.zeros((0, 0))
        return ObservabilityReport(0, [], empty, 0, True, np.zeros(0), empty)
    h = sys.H.sample(grid.nodes)
    observed = [np.einsum("kij,kj->ki", h, psi.values) for psi in basis]
    gram = np.array([[inner(a, b, grid) for b in observed] for a in observed])
    gram = 0.5 * (gram + gram.T)
    energy, directions = np.linalg.eigh(gram)
    h_scale = float(simpson(np.sum(h * h, axis=(1, 2)), grid)) / grid.omega
    reference = h_scale * max(l2_norm(psi, grid) ** 2 for psi in basis)
    rank = linalg.numerical_rank(np.sort(np.abs(energy))[::-1], rtol, rtol * reference)
    return ObservabilityReport(k, basis, gram, rank, rank == k, energy, directions)


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise.

    ``kind="expression"``: eta(t) = scale * shape(t), deterministic.
    ``kind="random"``: eta_j(t) = scale * shape_j(t) * sum_k (a_jk cos(k nu t) + b_jk sin(k nu t))
    with a, b ~ N(0, 1/K), nu = 2 pi / omega. Its covariance on the diagonal is
    scale^2 shape_j(t)^2, so both kinds share the trace integral
    scale^2 * int |shape|^2. With ``admissible=True`` the scale is reduced until
    that integral is at most one.
    """

    shape: object
    kind: str = "expression"
    scale: float = 1.0
    harmonics: int = 8
    seed: int | None = None
    admissible: bool = False

    def __post_init__(self):
        if self.kind not in ("expression", "random"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if isinstance(self.shape, (list, tuple)):
            object.__setattr__(self, "shape", TimeVector(self.shape))
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")

    @classmethod
    def zero(cls, m: int) -> "NoiseModel":
        return cls(TimeVector.zeros(m))

    @property
    def dim(self) -> int:
        return self.shape.shape[0]

    def trace_integral(self, grid: Grid, scale: float | None = None) -> float:
        s = self.scale if scale is None else scale
        v = self.shape.sample(grid.nodes)
        return float(s * s * simpson(np.sum(v * v, axis=1), grid))

    def effective_scale(self, grid: Grid) -> float:
        if not self.admissible:
            return self.scale
        total = self.trace_integral(grid)
        return self.scale if total <= 1.0 else self.scale / math.sqrt(total)

    def sample(self, grid: Grid, seed: int | None = None) -> np.ndarray:
        """Noise realisation at the grid nodes, shape (N+1, m)."""
        scale = self.effective_scale(grid)
        shape = self.shape.sample(grid.nodes)
        if self.kind == "expression":
            return scale * shape
        rng = np.random.default_rng(self.seed if seed is None else seed)
        K = self.harmonics
        a = rng.standard_normal((self.dim, K)) / math.sqrt(K)
        b = rng.standard_normal((self.dim, K)) / math.sqrt(K)
        phase = np.outer(grid.nodes, np.arange(1, K + 1)) * (2 * math.pi / grid.omega)
        series = np.cos(phase) @ a.T + np.sin(phase) @ b.T
        return scale * shape * series


@dataclass(frozen=True)
class SimulatedObservation:
    y: Trajectory
    x: Trajectory
    eta: np.ndarray
    input_norm: float
    noise_trace_integral: float
    input_admissible: bool
    noise_admissible: bool
    periodicity_gap: float
    kernel_component_defect: float | None = None


def _kernel_distance(component: np.ndarray, basis: list, grid: Grid) -> float:
    """Relative L2 distance of a trajectory from the span of ``basis``."""
    norm = l2_norm(component, grid)
    if norm == 0.0:
        return 0.0
    rest = component.copy()
    for b in _orthonormalize([k.values for k in basis], grid):
        rest = rest - inner(b, rest, grid) * b
    return l2_norm(rest, grid) / norm


def simulate_observation(
    sys: ObservationSystem,
    f,
    noise: NoiseModel,
    grid: Grid,
    seed: int | None = None,
    kernel_component=None,
    initial_state=None,
    rtol: float = linalg.DEFAULT_RTOL,
    tol: float = DEFAULT_BVP_TOL,
) -> SimulatedObservation:
    """Generate y = H x + eta for a state driven by the input f.

    By default x is the minimum-norm periodic solution; ``initial_state``
    switches to the initial-value solution from that state instead (no
    periodicity imposed, the gap is reported). ``kernel_component`` is added
    on top in either case.
    """
    _check_grid(sys, grid)
    if isinstance(f, (list, tuple)):
        f = TimeVector(f)
    if tuple(f.shape) != (sys.r,):
        raise ValueError(f"input has dimension {f.shape}, expected {sys.r}")
    if noise.dim != sys.m:
        raise ValueError(f"noise has dimension {noise.dim}, expected {sys.m}")
    B = sys.B
    forcing = SampledFunction((sys.n,), lambda t: np.einsum("kij,kj->ki", B.sample(t), f.sample(t)))
    solver = PeriodicSolver(sys.A, grid, rtol, tol)
    if initial_state is None:
        sol = solver.solve(forcing)
        if not sol.solvable:
            raise IncompatibleProblem(
                f"input admits no periodic state (residual {sol.compatibility_residual:.3e})"
            )
        x = sol.particular
    else:
        x0 = np.asarray(initial_state, dtype=float)
        if x0.shape != (sys.n,):
            raise ValueError(f"initial state must have length {sys.n}")
        x = propagate_affine(sys.A, forcing, x0, grid, tab=solver.tab)
    defect = None
    if kernel_component is not None:
        if isinstance(kernel_component, (list, tuple)):
            kernel_component = TimeVector(kernel_component)
        kv = kernel_component.sample(grid.nodes)
        defect = _kernel_distance(kv, solver.kernel_basis(), grid)
        if defect > 1e-6:
            log.warning("kernel component is %.2e away (relative L2) from the periodic kernel", defect)
        x = Trajectory(grid, x.values + kv)
    fv = f.sample(grid.nodes)
    input_norm = l2_norm(fv, grid)
    eta = noise.sample(grid, seed)
    trace = noise.trace_integral(grid, noise.effective_scale(grid))
    hn = sys.H.sample(grid.nodes)
    y = np.einsum("kij,kj->ki", hn, x.values) + eta
    return SimulatedObservation(
        y=Trajectory(grid, y),
        x=Trajectory(grid, x.values),
        eta=eta,
        input_norm=input_norm,
        noise_trace_integral=trace,
        input_admissible=input_norm <= 1.0 + 1e-12,
        noise_admissible=trace <= 1.0 + 1e-12,
        periodicity_gap=float(np.linalg.norm(x.end - x.start)),
        kernel_component_defect=defect,
    )
