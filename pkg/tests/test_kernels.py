import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokespump.kernels import pressure_kernel, stokeslet, stokeslet_gradient, stokeslet_stress, traction_kernel

coord = st.floats(-3.0, 3.0, allow_nan=False)
point = st.tuples(coord, coord).map(np.array)


def separated(x, y):
    return np.linalg.norm(x - y) > 1e-2


def test_stokeslet_hand_value():
    S = stokeslet(np.array([1.0, 0.0]), np.zeros(2))
    np.testing.assert_allclose(S, np.diag([1.0, 0.0]) / (4 * np.pi), atol=1e-15)
    S = stokeslet(np.array([0.0, np.e]), np.zeros(2), mu=2.0)
    np.testing.assert_allclose(S, np.diag([-1.0, 0.0]) / (8 * np.pi), atol=1e-15)


def test_pressure_and_traction_hand_values():
    x = np.array([2.0, 0.0])
    np.testing.assert_allclose(pressure_kernel(x, np.zeros(2)), [1 / (4 * np.pi), 0.0])
    T = traction_kernel(x, np.zeros(2), np.array([1.0, 0.0]))
    np.testing.assert_allclose(T, [[-1 / (2 * np.pi), 0.0], [0.0, 0.0]], atol=1e-16)


def test_coincident_points_raise():
    with pytest.raises(ValueError):
        stokeslet(np.ones(2), np.ones(2))


@given(point, point)
def test_stokeslet_symmetries(x, y):
    if not separated(x, y):
        return
    S = stokeslet(x, y)
    np.testing.assert_allclose(S, S.T, atol=1e-14)
    np.testing.assert_allclose(S, stokeslet(y, x), atol=1e-14)


@given(point, point, st.floats(0.0, 2 * np.pi))
def test_rotation_equivariance(x, y, phi):
    if not separated(x, y):
        return
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    np.testing.assert_allclose(stokeslet(R @ x, R @ y), R @ stokeslet(x, y) @ R.T, atol=1e-13)
    np.testing.assert_allclose(pressure_kernel(R @ x, R @ y), R @ pressure_kernel(x, y), atol=1e-13)


@given(point, point)
def test_divergence_free(x, y):
    if not separated(x, y):
        return
    G = stokeslet_gradient(x, y)
    # sum_i dS_ij/dx_i
    assert np.allclose(np.einsum("iji->j", G), 0.0, atol=1e-10 / np.linalg.norm(x - y))


@settings(max_examples=30)
@given(point, point)
def test_gradient_matches_finite_differences(x, y):
    if np.linalg.norm(x - y) < 0.3:
        return
    h = 1e-6
    G = stokeslet_gradient(x, y)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (stokeslet(x + e, y) - stokeslet(x - e, y)) / (2 * h)
        np.testing.assert_allclose(G[..., k], fd, atol=1e-7)


@settings(max_examples=30)
@given(point, point, st.floats(0.1, 10.0))
def test_stress_is_newtonian_and_divergence_free(x, y, mu):
    if np.linalg.norm(x - y) < 0.3:
        return
    G = stokeslet_gradient(x, y, mu)
    p = pressure_kernel(x, y)
    sigma = stokeslet_stress(x, y)
    # sigma_ij^(k) = -p_k delta_ij + mu (du_i/dx_j + du_j/dx_i), with u_i = S_ik
    strain = np.einsum("ikj->ijk", G) + np.einsum("jki->ijk", G)
    expected = -np.eye(2)[:, :, None] * p[None, None, :] + mu * strain
    np.testing.assert_allclose(sigma, expected, atol=1e-12)
    h = 1e-5
    div = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        div += (stokeslet_stress(x + e, y)[:, j, :] - stokeslet_stress(x - e, y)[:, j, :]) / (2 * h)
    np.testing.assert_allclose(div, 0.0, atol=1e-7)


@given(point, point, st.floats(0.0, 2 * np.pi))
def test_traction_is_stress_times_normal(x, y, phi):
    if not separated(x, y):
        return
    n = np.array([np.cos(phi), np.sin(phi)])
    np.testing.assert_allclose(
        traction_kernel(x, y, n), np.einsum("ijk,j->ik", stokeslet_stress(x, y), n), atol=1e-10
    )


def test_broadcasting_shapes():
    x = np.random.default_rng(0).normal(size=(5, 1, 2))
    y = np.random.default_rng(1).normal(size=(1, 7, 2)) + 10.0
    assert stokeslet(x, y).shape == (5, 7, 2, 2)
    assert pressure_kernel(x, y).shape == (5, 7, 2)
    assert stokeslet_gradient(x, y).shape == (5, 7, 2, 2, 2)
