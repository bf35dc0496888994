import math

import numpy as np
import pytest

from minimax_bvp.adversary import BoundCheck, guaranteed_bound_check
from minimax_bvp.observer import solve_estimator
from minimax_bvp.ode import Grid, TimeVector
from minimax_bvp.scenarios import random_case

TWO_PI = 2 * math.pi
ELL2 = TimeVector(["sin(t)", "cos(t)"])


def test_worked_feasible_functional(integrator_system):
    grid = Grid(TWO_PI, 512)
    check = guaranteed_bound_check(integrator_system, ELL2, grid, samples=60, seed=3)
    assert check.sigma_hat == pytest.approx(math.pi, rel=1e-6)
    assert check.bound_holds
    # the targeted sample attains the bound
    assert check.mse_optimal[0] == pytest.approx(check.sigma_hat, rel=1e-6)
    assert check.perturbed_is_worse


def test_adversaries_are_admissible(integrator_system):
    check = guaranteed_bound_check(integrator_system, ELL2, Grid(TWO_PI, 256), samples=40, seed=1)
    assert np.all(check.input_norms <= 1 + 1e-9)
    assert np.all(check.noise_traces <= 1 + 1e-9)
    assert check.mse_optimal.shape == check.mse_perturbed.shape == (40,)


def test_infeasible_functional_rejected(integrator_system):
    with pytest.raises(ValueError, match="not estimable"):
        guaranteed_bound_check(integrator_system, TimeVector(["sin(t)", "1"]), Grid(TWO_PI, 128), samples=4)


def test_needs_the_targeted_samples(integrator_system):
    with pytest.raises(ValueError):
        guaranteed_bound_check(integrator_system, ELL2, Grid(TWO_PI, 128), samples=1)


def test_seeded_and_reusable_estimate(integrator_system):
    grid = Grid(TWO_PI, 256)
    est = solve_estimator(integrator_system, ELL2, grid)
    a = guaranteed_bound_check(integrator_system, ELL2, grid, samples=20, seed=5)
    b = guaranteed_bound_check(integrator_system, ELL2, grid, samples=20, seed=5, estimate=est)
    np.testing.assert_array_equal(a.mse_optimal, b.mse_optimal)
    c = guaranteed_bound_check(integrator_system, ELL2, grid, samples=20, seed=6)
    assert not np.array_equal(a.mse_optimal[2:], c.mse_optimal[2:])


def test_sample_streams_do_not_depend_on_count(integrator_system):
    # each sample has its own spawned stream, so the first ones do not change with the total
    grid = Grid(TWO_PI, 256)
    a = guaranteed_bound_check(integrator_system, ELL2, grid, samples=10, seed=9)
    b = guaranteed_bound_check(integrator_system, ELL2, grid, samples=25, seed=9)
    np.testing.assert_allclose(a.mse_optimal, b.mse_optimal[:10], rtol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_bound_on_random_cases(seed):
    case = random_case(np.random.default_rng(7000 + seed), want_feasible=True)
    check = guaranteed_bound_check(case.system, case.ell, Grid(TWO_PI, 256), samples=50, seed=seed)
    assert check.sigma_hat >= 0
    assert check.bound_holds
    assert check.perturbed_is_worse


def test_bound_check_properties():
    c = BoundCheck(1.0, np.array([0.5, 1.04]), np.array([0.2, 1.2]), np.ones(2), np.ones(2))
    assert c.worst_optimal == 1.04 and c.worst_perturbed == 1.2
    assert c.bound_holds and c.perturbed_is_worse
    c = BoundCheck(1.0, np.array([1.06]), np.array([1.0]), np.ones(1), np.ones(1))
    assert not c.bound_holds and not c.perturbed_is_worse
