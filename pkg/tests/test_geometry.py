import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowvio.geometry import (
    E1, E2, E3, attitude_error, exp_so3, log_so3, normalize, orthogonality_error,
    orthonormalize, proj, proj_bar, random_rotation, reduced_attitude_error, skew,
    tangent_project, unskew,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
small_vec = st.tuples(*[st.floats(-1.8, 1.8)] * 3).map(np.array)


def ball(max_norm):
    return st.tuples(*[st.floats(-1, 1)] * 3, st.floats(0, max_norm)).map(
        lambda t: np.zeros(3) if np.linalg.norm(t[:3]) < 1e-9
        else t[3] * np.array(t[:3]) / np.linalg.norm(t[:3]))


def test_skew_examples():
    assert np.allclose(skew(E1) @ E2, E3)
    assert np.array_equal(skew(np.zeros(3)), np.zeros((3, 3)))
    u = np.array([1.0, 2.0, 3.0])
    assert np.allclose(skew(u) @ u, 0)


@given(vec3, vec3)
def test_skew_is_cross_product(u, v):
    assert np.allclose(skew(u) @ v, np.cross(u, v), atol=1e-9)
    assert np.array_equal(skew(u).T, -skew(u))


@given(vec3)
def test_skew_unskew_round_trip(u):
    assert np.array_equal(unskew(skew(u)), u)


def test_exp_examples():
    assert np.array_equal(exp_so3(np.zeros(3)), np.eye(3))
    assert np.allclose(exp_so3(math.pi / 2 * E3) @ E1, E2, atol=1e-15)
    w = np.array([0.3, -0.1, 0.7])
    assert np.allclose(exp_so3(w) @ exp_so3(-w), np.eye(3), atol=1e-15)


@given(ball(math.pi))
def test_exp_stays_on_so3(w):
    R = exp_so3(w)
    assert orthogonality_error(R) < 1e-12
    assert abs(np.linalg.det(R) - 1) < 1e-12


def test_exp_small_angle_branch_is_continuous():
    axis = normalize(np.array([1.0, -2.0, 0.5]))
    for t in (1e-6 * (1 - 1e-9), 1e-6 * (1 + 1e-9)):
        R = exp_so3(t * axis)
        # exact expansion through second order
        W = skew(t * axis)
        assert np.allclose(R, np.eye(3) + W + 0.5 * W @ W, atol=1e-18)


@given(ball(3.1))
def test_log_inverts_exp(w):
    assert np.allclose(log_so3(exp_so3(w)), w, atol=1e-8)


def test_log_near_pi():
    w = (math.pi - 1e-8) * normalize(np.array([0.2, -0.5, 1.0]))
    assert np.allclose(exp_so3(log_so3(exp_so3(w))), exp_so3(w), atol=1e-7)


def test_orthonormalize_restores_rotation():
    rng = np.random.default_rng(3)
    R = random_rotation(rng) + 1e-3 * rng.standard_normal((3, 3))
    Q = orthonormalize(R)
    assert orthogonality_error(Q) < 1e-14
    assert np.linalg.det(Q) > 0
    assert np.linalg.norm(Q - R) < 1e-2


def test_proj_examples():
    assert np.allclose(proj(E3), np.diag([1.0, 1, 0]))
    assert np.allclose(proj(2 * E3), np.diag([1.0, 1, 0]))
    u = np.ones(3)
    assert np.allclose(proj(u) @ u, 0)
    with pytest.raises(ValueError):
        proj(np.full(3, 1e-13))


def test_proj_bar_examples():
    assert np.array_equal(proj_bar(np.zeros(3)), np.zeros((3, 3)))
    assert np.allclose(proj_bar(2 * E1), np.diag([0.0, 4, 4]))
    assert np.allclose(proj_bar(E2), proj(E2))


def test_proj_idempotent_across_scales():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        u = normalize(rng.standard_normal(3)) * 10 ** rng.uniform(-6, 6)
        P = proj(u)
        assert np.linalg.norm(P @ P - P) < 1e-12


@given(vec3)
def test_proj_bar_consistency(u):
    n2 = u @ u
    if n2 < 1e-12:
        return
    assert np.linalg.norm(proj_bar(u) - n2 * proj(u)) < 1e-9 * n2


def test_tangent_project_examples():
    assert np.allclose(tangent_project(E3, E3), 0)
    assert np.allclose(tangent_project(E3, E1), E1)
    assert np.allclose(tangent_project(E3, np.array([1.0, 0, 5])), E1)


@given(vec3, vec3)
def test_tangent_project_is_tangent(a, g):
    if np.linalg.norm(a) < 1e-6:
        return
    eta = normalize(a)
    assert abs(tangent_project(eta, g) @ eta) < 1e-12 * max(1.0, np.linalg.norm(g))


def test_attitude_error_examples():
    R = exp_so3(np.array([0.4, 0.2, -1.0]))
    assert attitude_error(R, R) < 1e-15
    assert math.isclose(attitude_error(exp_so3(math.pi * E1), np.eye(3)), 2 * math.sqrt(2), rel_tol=1e-12)
    assert math.isclose(attitude_error(exp_so3(0.1 * E3), np.eye(3)),
                        2 * math.sqrt(2) * abs(math.sin(0.05)), rel_tol=1e-12)


@given(ball(math.pi), ball(math.pi))
def test_attitude_error_symmetric_and_axis_angle(w1, w2):
    R1, R2 = exp_so3(w1), exp_so3(w2)
    e = attitude_error(R1, R2)
    assert math.isclose(e, attitude_error(R2, R1), abs_tol=1e-12)
    theta = np.linalg.norm(log_so3(R1 @ R2.T))
    assert math.isclose(e, 2 * math.sqrt(2) * abs(math.sin(theta / 2)), abs_tol=1e-7)
    assert 0 <= e <= 2 * math.sqrt(2) + 1e-12


def test_reduced_attitude_error_examples():
    g = np.array([0.0, 0.0, -9.81])
    R = exp_so3(np.array([0.3, 0.1, 2.0]))
    assert abs(reduced_attitude_error(R, R.T @ g, g)) < 1e-15
    assert math.isclose(reduced_attitude_error(np.eye(3), -g, g), 2.0)
    assert math.isclose(reduced_attitude_error(np.eye(3), np.array([9.81, 0, 0]), g), 1.0)
    with pytest.raises(ValueError):
        reduced_attitude_error(np.eye(3), g, np.zeros(3))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_random_rotation_valid(seed):
    R = random_rotation(np.random.default_rng(seed))
    assert orthogonality_error(R) < 1e-12
    assert abs(np.linalg.det(R) - 1) < 1e-12
