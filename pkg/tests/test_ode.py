import math

import numpy as np
import pytest

from minimax_bvp.ode import (
    DivergenceError,
    Grid,
    SampledFunction,
    TabulatedVector,
    TimeMatrix,
    TimeVector,
    Trajectory,
    cubic_midpoints,
    propagate_affine,
    propagate_fundamental,
    propagate_inverse_fundamental,
    simpson,
    zero_vector,
)

TWO_PI = 2 * math.pi
INTEGRATOR = TimeMatrix([["1", "0"], ["1", "0"]])
INTEGRATOR_ADJOINT = TimeMatrix([["-1", "-1"], ["0", "0"]])


def F_exact(t):
    return np.array([[math.exp(t), 0.0], [math.exp(t) - 1.0, 1.0]])


def G_exact(t):
    return np.array([[math.exp(-t), math.exp(-t) - 1.0], [0.0, 1.0]])


@pytest.mark.parametrize("steps", [0, 3, -2])
def test_grid_rejects_odd_or_small_steps(steps):
    with pytest.raises(ValueError):
        Grid(1.0, steps)


def test_grid_nodes():
    g = Grid(TWO_PI, 8)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == TWO_PI
    assert np.all(np.diff(g.nodes) > 0)
    assert g.midpoints.size == 8


@pytest.mark.parametrize("t", [0.0, 1.0, TWO_PI])
def test_fundamental_matches_closed_form(t):
    g = Grid(TWO_PI, 2048)
    F = propagate_fundamental(INTEGRATOR, g)
    G = propagate_fundamental(INTEGRATOR_ADJOINT, g)
    np.testing.assert_allclose(F.at(t), F_exact(t), atol=1e-7)
    np.testing.assert_allclose(G.at(t), G_exact(t), atol=1e-7)


def test_zero_coefficient_gives_identity():
    g = Grid(1.0, 16)
    F = propagate_fundamental(TimeMatrix([["0", "0"], ["0", "0"]]), g)
    np.testing.assert_array_equal(F.values, np.broadcast_to(np.eye(2), F.values.shape))
    Psi = propagate_inverse_fundamental(TimeMatrix([["0"]]), g)
    np.testing.assert_array_equal(Psi.values[:, 0, 0], 1.0)


def test_inverse_fundamental_scalar_closed_form():
    g = Grid(2.0, 256)
    Psi = propagate_inverse_fundamental(TimeMatrix([["1"]]), g)
    np.testing.assert_allclose(Psi.values[:, 0, 0], np.exp(-g.nodes), rtol=1e-10)


def test_inverse_consistency_at_every_node():
    g = Grid(TWO_PI, 2048)
    m = TimeMatrix([["sin(t)", "1"], ["-1", "0.3*cos(2*t)"]])
    F = propagate_fundamental(m, g)
    Psi = propagate_inverse_fundamental(m, g)
    err = np.linalg.norm(F.values @ Psi.values - np.eye(2), axis=(1, 2))
    assert err.max() <= 1e-7
    F = propagate_fundamental(INTEGRATOR, g)
    Psi = propagate_inverse_fundamental(INTEGRATOR, g)
    assert np.linalg.norm(F.values @ Psi.values - np.eye(2), axis=(1, 2)).max() <= 1e-8


def test_rk4_convergence_factor():
    errors = []
    for steps in (32, 64, 128, 256):
        F = propagate_fundamental(INTEGRATOR, Grid(TWO_PI, steps))
        errors.append(np.linalg.norm(F.end - F_exact(TWO_PI)))
    factors = [a / b for a, b in zip(errors, errors[1:])]
    assert min(factors) >= 12, factors


def test_affine_examples():
    g = Grid(TWO_PI, 2048)
    h = propagate_affine(INTEGRATOR_ADJOINT, TimeVector(["sin(t)", "cos(t)"]), np.zeros(2), g)
    np.testing.assert_allclose(h.values, np.stack([0 * g.nodes, np.sin(g.nodes)], 1), atol=1e-10)
    h = propagate_affine(INTEGRATOR_ADJOINT, TimeVector(["sin(t)", "1"]), np.zeros(2), g)
    expected = [0.5 - math.exp(-TWO_PI) / 2 - TWO_PI, TWO_PI]
    np.testing.assert_allclose(h.end, expected, atol=1e-6)
    np.testing.assert_allclose(h.end, [-5.784119, 6.283185], atol=1e-6)
    zero = propagate_affine(INTEGRATOR, zero_vector(2), np.zeros(2), g)
    assert not zero.values.any()


def test_affine_closed_form_with_time_varying_coefficient():
    # x' = -x + cos t, x(0) = 1 has x = (cos t + sin t)/2 + e^{-t}/2
    g = Grid(5.0, 1000)
    x = propagate_affine(TimeMatrix([["-1"]]), TimeVector(["cos(t)"]), np.array([1.0]), g)
    t = g.nodes
    np.testing.assert_allclose(x.values[:, 0], (np.cos(t) + np.sin(t)) / 2 + np.exp(-t) / 2, atol=1e-11)
    # derivative samples drive Hermite interpolation between nodes
    assert x.at(2.345)[0] == pytest.approx((math.cos(2.345) + math.sin(2.345) + math.exp(-2.345)) / 2, abs=1e-10)


def test_divergence_is_reported():
    with pytest.raises(DivergenceError):
        propagate_fundamental(TimeMatrix([["1000"]]), Grid(10.0, 64))


def test_simpson_examples():
    g = Grid(TWO_PI, 64)
    assert simpson(np.sin(g.nodes) ** 2, g) == pytest.approx(math.pi, abs=1e-8)
    assert simpson(np.ones(65), g) == TWO_PI
    assert abs(simpson(np.sin(g.nodes), g)) <= 1e-12


@pytest.mark.parametrize("coeffs", [(1, 0, 0, 0), (0, 1, 0, 0), (2, -3, 0.5, 0), (0.3, 1, -2, 4)])
def test_simpson_exact_on_cubics(coeffs):
    g = Grid(3.0, 10)
    poly = np.polynomial.Polynomial(coeffs)
    exact = poly.integ()(3.0) - poly.integ()(0.0)
    assert simpson(poly(g.nodes), g) == pytest.approx(exact, abs=1e-12)


def test_simpson_matrix_valued():
    g = Grid(1.0, 4)
    values = np.ones((5, 2, 3))
    np.testing.assert_allclose(simpson(values, g), np.ones((2, 3)))


def test_sampled_and_tabulated_coefficients():
    f = SampledFunction((2,), lambda t: np.stack([t, t * t], axis=1))
    np.testing.assert_allclose(f.at(3.0), [3.0, 9.0])
    tab = TabulatedVector(np.array([0.0, 1.0, 2.0]), np.array([[0.0], [2.0], [0.0]]))
    np.testing.assert_allclose(tab.sample([0.5, 1.5]), [[1.0], [1.0]])
    with pytest.raises(ValueError):
        TabulatedVector(np.array([0.0, 0.0]), np.zeros((2, 1)))


def test_cubic_midpoints_exact_on_cubics():
    g = Grid(2.0, 8)
    poly = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.7])
    np.testing.assert_allclose(cubic_midpoints(poly(g.nodes)), poly(g.midpoints), atol=1e-13)
    traj = Trajectory(g, np.stack([poly(g.nodes), g.nodes], 1))
    np.testing.assert_allclose(traj.midpoint_values()[:, 0], poly(g.midpoints), atol=1e-13)
