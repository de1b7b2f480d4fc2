import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SHAPES, wavy_shape
from stokespump import SolverConfig, WallShapeParams, build_channel, full_gradient
from stokespump.functionals import FunctionalValues
from stokespump.geometry import LOWER, UPPER, basis_perturbations, parameter_index, perturbation_field
from stokespump.optimizer import OptState, augmented_lagrangian_gradient, augmented_lagrangian_value
from stokespump.shape_calculus import finite_difference_gradient, functionals_only, grad_CQ, grad_CV, grad_JPL

CFG = SolverConfig(M=64)


def relative_errors(analytic, fd):
    """Per-entry error scaled by the largest FD entry of the same functional."""
    return np.abs(analytic - fd) / np.max(np.abs(fd), axis=0)


@pytest.fixture(scope="module")
def wavy_gradient():
    return full_gradient(wavy_shape(), CFG)


def as_matrix(g):
    return np.column_stack([g.grad.dJ, g.grad.dCQ, g.grad.dCV])


def test_gradient_matches_finite_differences(wavy_gradient):
    fd = finite_difference_gradient(wavy_shape(), CFG)
    assert relative_errors(as_matrix(wavy_gradient), fd).max() < 1e-5


@pytest.mark.parametrize("name", ["bump", "random"])
def test_gradient_matches_finite_differences_on_sampled_directions(name):
    params = SHAPES[name]()
    idx = [0, 7, 13, 20, 21, 26, 33, 40]
    g = full_gradient(params, CFG)
    fd = finite_difference_gradient(params, CFG, indices=idx)
    scale = np.max(np.abs(as_matrix(g)), axis=0)
    assert np.max(np.abs(as_matrix(g)[idx] - fd) / scale) < 1e-5


def test_two_solves_per_gradient(wavy_gradient):
    assert wavy_gradient.solves == 2
    assert wavy_gradient.grad.dJ.shape == (41,)


@given(offset=st.floats(-100, 100))
def test_grad_JPL_gauge_invariance(wavy_gradient, offset):
    g = wavy_gradient
    theta = basis_perturbations(g.geom.params, g.geom)
    shifted = grad_JPL(g.fwd, g.geom, theta, pressure_offset=offset)
    assert np.max(np.abs(shifted - g.grad.dJ)) < 1e-10 * max(1.0, abs(offset))


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=41, max_size=41).map(np.array),
    st.lists(st.floats(-1, 1), min_size=41, max_size=41).map(np.array),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_linearity(wavy_gradient, d1, d2, alpha, beta):
    g = wavy_gradient
    th = perturbation_field(g.geom.params, alpha * d1 + beta * d2, g.geom)
    M = as_matrix(g)
    expected = (alpha * d1 + beta * d2) @ M
    got = np.array([grad_JPL(g.fwd, g.geom, th), grad_CQ(g.fwd, g.adj, g.geom, th), grad_CV(g.geom, th)])
    np.testing.assert_allclose(got, expected, atol=1e-10 * max(1.0, np.abs(M).max()))


def test_zero_direction_gives_zero(wavy_gradient):
    g = wavy_gradient
    th = perturbation_field(g.geom.params, np.zeros(41), g.geom)
    assert grad_JPL(g.fwd, g.geom, th) == 0.0
    assert grad_CQ(g.fwd, g.adj, g.geom, th) == 0.0
    assert grad_CV(g.geom, th) == 0.0


def test_tangential_field_nullity(wavy_gradient):
    """A purely tangential field only moves material along the wall."""
    g = wavy_gradient
    th = basis_perturbations(g.geom.params, g.geom)
    tangential = dataclasses.replace(
        th,
        theta_n=np.zeros_like(th.theta_n),
        dtheta_n_ds=np.zeros_like(th.dtheta_n_ds),
        theta2_at_zplus=np.zeros_like(th.theta2_at_zplus),
        theta2_at_zminus=np.zeros_like(th.theta2_at_zminus),
    )
    assert np.all(grad_JPL(g.fwd, g.geom, tangential) == 0.0)
    assert np.all(grad_CV(g.geom, tangential) == 0.0)
    np.testing.assert_allclose(grad_CQ(g.fwd, g.adj, g.geom, tangential), 0.0, atol=1e-14)


def test_reparametrizing_flat_walls_changes_nothing():
    """On flat walls the x1 modes are reparametrizations: zero derivative, unchanged functionals."""
    N = 5
    flat = WallShapeParams.flat(N)
    g = full_gradient(flat, CFG)
    x1_modes = [parameter_index(N, w, 1, k) for w in (UPPER, LOWER) for k in range(1, 2 * N + 1)]
    for name in ("dJ", "dCQ", "dCV"):
        np.testing.assert_allclose(getattr(g.grad, name)[x1_modes], 0.0, atol=1e-10)
    xi = flat.xi.copy()
    xi[x1_modes[0]] = 0.1
    xi[x1_modes[15]] = -0.1
    fv = functionals_only(flat.with_xi(xi), CFG)
    assert abs(fv.J_PL) < 1e-8 and abs(fv.Q) < 1e-8
    assert fv.V == pytest.approx(g.values.V, abs=1e-12)


def test_flat_channel_gradient():
    N = 5
    flat = WallShapeParams.flat(N)
    g = full_gradient(flat, CFG)
    L = flat.L
    np.testing.assert_allclose(g.grad.dJ, 0.0, atol=1e-8)
    expected = np.zeros(8 * N + 1)
    expected[4 * N] = L
    for k in range(1, N + 1):
        # cos modes enter as cos(kt) - 1; the lower wall normal points down
        expected[parameter_index(N, UPPER, 2, k)] = -L
        expected[parameter_index(N, LOWER, 2, k)] = L
    np.testing.assert_allclose(g.grad.dCV, expected, atol=1e-12)
    # raising the flat top wall keeps Q = 0: the wall term and the endpoint term cancel
    assert abs(g.grad.dCQ[4 * N]) < 1e-8
    np.testing.assert_allclose(g.grad.dCQ, 0.0, atol=1e-8)


def test_grad_CV_matches_volume_differences():
    params = SHAPES["bump"]()
    geom = build_channel(params, 64, 32)
    dV = grad_CV(geom, basis_perturbations(params, geom))
    h = 1e-5
    for k in range(params.size):
        e = np.zeros(params.size)
        e[k] = h
        fd = (build_channel(params.with_xi(params.xi + e), 64, 32).volume
              - build_channel(params.with_xi(params.xi - e), 64, 32).volume) / (2 * h)
        assert abs(dV[k] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_augmented_lagrangian_gradient():
    params = SHAPES["bump"]()
    Q0, V0 = 0.05, 14.0
    state = OptState.initial((10.0, 10.0))
    state.lam = np.array([0.3, -0.2])
    g = full_gradient(params, CFG, Q0, V0)
    analytic = augmented_lagrangian_gradient(g.values, g.grad, state)

    def value(xi):
        fv = functionals_only(params.with_xi(xi), CFG, Q0, V0)
        return augmented_lagrangian_value(fv, state)

    h = 1e-5
    for k in (0, 20, 21, 30, 40):
        e = np.zeros(params.size)
        e[k] = h
        fd = (value(params.xi + e) - value(params.xi - e)) / (2 * h)
        assert abs(analytic[k] - fd) <= 1e-5 * np.max(np.abs(analytic))


def test_augmented_lagrangian_value_examples():
    state = OptState.initial((10.0, 10.0))
    assert augmented_lagrangian_value(FunctionalValues(2.0, 0.0, 0.0, 0.0, 0.0), state) == 2.0
    assert augmented_lagrangian_value(FunctionalValues(2.0, 0.0, 0.0, 0.1, 0.0), state) == pytest.approx(2.05)
