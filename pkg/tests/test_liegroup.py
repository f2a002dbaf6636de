import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiekf.liegroup import (
    GroupState,
    adjoint,
    compose,
    exp_se2n3,
    exp_so3,
    hat_so3,
    inverse,
    left_jacobian_so3,
    log_se2n3,
    log_so3,
    project_rotation,
)
from conftest import expm_series, random_group_state, se_wedge

RNG = np.random.default_rng(2024)


# ---------------------------------------------------------------- hat

def test_hat_zero():
    assert np.array_equal(hat_so3([0.0, 0.0, 0.0]), np.zeros((3, 3)))


def test_hat_canonical_z():
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert np.array_equal(hat_so3([0.0, 0.0, 1.0]), expected)


def test_hat_cross_product_oracle():
    for _ in range(1000):
        w = RNG.normal(size=3) * 3.0
        y = RNG.normal(size=3) * 3.0
        assert np.abs(hat_so3(w) @ y - np.cross(w, y)).max() < 1e-12


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3))
def test_hat_antisymmetry_exact(w):
    W = hat_so3(w)
    assert np.array_equal(W.T, -W)


# ---------------------------------------------------------------- exp_so3

def test_exp_identity():
    assert np.abs(exp_so3(np.zeros(3)) - np.eye(3)).max() == 0.0


def test_exp_quarter_turn_z():
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.abs(exp_so3([0.0, 0.0, math.pi / 2]) - expected).max() < 1e-15


def test_exp_matches_series_oracle():
    for _ in range(1000):
        axis = RNG.normal(size=3)
        axis /= np.linalg.norm(axis)
        w = axis * RNG.uniform(0.0, math.pi)
        assert np.abs(exp_so3(w) - expm_series(hat_so3(w))).max() < 1e-10


def test_exp_small_angle_branch():
    for scale in (1e-7, 1e-8, 1e-10):
        w = np.array([1.0, -2.0, 0.5]) * scale
        assert np.abs(exp_so3(w) - expm_series(hat_so3(w))).max() < 1e-15


def test_exp_output_is_rotation():
    for _ in range(1000):
        R = exp_so3(RNG.normal(size=3) * 2.0)
        assert np.abs(R @ R.T - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


# ---------------------------------------------------------------- log_so3

def test_log_identity():
    assert np.abs(log_so3(np.eye(3))).max() == 0.0


def test_log_exp_roundtrip_vector():
    w = np.array([0.1, -0.2, 0.3])
    assert np.abs(log_so3(exp_so3(w)) - w).max() < 1e-10


def test_log_pi_about_x():
    R = exp_so3([math.pi, 0.0, 0.0])
    assert np.abs(log_so3(R) - np.array([math.pi, 0.0, 0.0])).max() < 1e-9


def test_exp_log_roundtrip_sweep():
    for _ in range(1000):
        axis = RNG.normal(size=3)
        axis /= np.linalg.norm(axis)
        w = axis * RNG.uniform(1e-8, math.pi - 1e-3)
        R = exp_so3(w)
        assert np.abs(exp_so3(log_so3(R)) - R).max() < 1e-9
        assert np.abs(log_so3(R) - w).max() < 1e-9


def test_log_near_pi_branch():
    for _ in range(200):
        axis = RNG.normal(size=3)
        axis /= np.linalg.norm(axis)
        w = axis * (math.pi - 10 ** RNG.uniform(-9.0, -4.0))
        R = exp_so3(w)
        assert np.abs(exp_so3(log_so3(R)) - R).max() < 1e-9


# ---------------------------------------------------------------- exp_se2n3

def test_exp_se2n3_zero_is_identity():
    chi = exp_se2n3(np.zeros(21))
    assert np.abs(chi.as_matrix() - np.eye(9)).max() == 0.0


def test_exp_se2n3_pure_translation():
    xi = np.zeros(21)
    xi[3:] = RNG.normal(size=18)
    chi = exp_se2n3(xi)
    assert np.array_equal(chi.R, np.eye(3))
    assert np.abs(chi.v - xi[3:6]).max() == 0.0
    assert np.abs(chi.p - xi[6:9]).max() == 0.0
    assert np.abs(chi.feet.reshape(-1) - xi[9:]).max() == 0.0


@pytest.mark.parametrize("n_feet", [0, 1, 4])
def test_exp_se2n3_matches_embedding_series(n_feet):
    for _ in range(300):
        xi = RNG.normal(size=9 + 3 * n_feet) * 0.8
        chi = exp_se2n3(xi)
        oracle = expm_series(se_wedge(xi, n_feet))
        assert np.abs(chi.as_matrix() - oracle).max() < 1e-9


def test_exp_se2n3_first_order_consistency():
    xi = RNG.normal(size=21) * 1e-8
    M = exp_se2n3(xi).as_matrix()
    assert np.abs(M - (np.eye(9) + se_wedge(xi, 4))).max() < 1e-15


def test_exp_se2n3_rejects_bad_length():
    with pytest.raises(ValueError):
        exp_se2n3(np.zeros(10))


def test_log_se2n3_roundtrip():
    for _ in range(300):
        xi = RNG.normal(size=21) * 0.7
        assert np.abs(log_se2n3(exp_se2n3(xi)) - xi).max() < 1e-9


# ---------------------------------------------------------------- adjoint

def test_adjoint_identity():
    assert np.array_equal(adjoint(GroupState.identity(4)), np.eye(21))


def test_adjoint_defining_relation():
    for _ in range(1000):
        chi = random_group_state(RNG)
        xi = RNG.normal(size=21)
        lhs = se_wedge(adjoint(chi) @ xi, 4)
        M = chi.as_matrix()
        rhs = M @ se_wedge(xi, 4) @ np.linalg.inv(M)
        assert np.linalg.norm(lhs - rhs) < 1e-10 * max(1.0, np.linalg.norm(rhs))


def test_adjoint_homomorphism():
    for _ in range(1000):
        a = random_group_state(RNG)
        b = random_group_state(RNG)
        lhs = adjoint(compose(a, b))
        rhs = adjoint(a) @ adjoint(b)
        assert np.linalg.norm(lhs - rhs) < 1e-9 * max(1.0, np.linalg.norm(rhs))


# ---------------------------------------------------------------- group ops

def test_compose_identity_neutral():
    a = random_group_state(RNG)
    e = GroupState.identity(4)
    assert np.abs(compose(e, a).as_matrix() - a.as_matrix()).max() < 1e-15
    assert np.abs(compose(a, e).as_matrix() - a.as_matrix()).max() < 1e-15


def test_inverse_roundtrip():
    for _ in range(500):
        a = random_group_state(RNG)
        assert np.abs(compose(a, inverse(a)).as_matrix() - np.eye(9)).max() < 1e-10
        assert np.abs(compose(inverse(a), a).as_matrix() - np.eye(9)).max() < 1e-10


def test_associativity_matrix_oracle():
    for _ in range(500):
        a, b, c = (random_group_state(RNG) for _ in range(3))
        lhs = compose(a, compose(b, c)).as_matrix()
        oracle = a.as_matrix() @ b.as_matrix() @ c.as_matrix()
        assert np.abs(lhs - oracle).max() < 1e-9
        rhs = compose(compose(a, b), c).as_matrix()
        assert np.abs(rhs - oracle).max() < 1e-9


def test_compose_foot_count_mismatch():
    with pytest.raises(ValueError):
        compose(GroupState.identity(4), GroupState.identity(2))


# ---------------------------------------------------------------- state type

def test_group_state_rejects_non_rotation():
    with pytest.raises(ValueError):
        GroupState(np.eye(3) * 1.1, np.zeros(3), np.zeros(3), np.zeros((4, 3)))


def test_group_state_rejects_nan():
    R = np.eye(3)
    with pytest.raises(ValueError):
        GroupState(R, np.array([np.nan, 0, 0]), np.zeros(3), np.zeros((4, 3)))


def test_group_state_matrix_roundtrip():
    a = random_group_state(RNG)
    b = GroupState.from_matrix(a.as_matrix())
    assert np.abs(a.as_matrix() - b.as_matrix()).max() < 1e-12


def test_project_rotation_tightens():
    R = exp_so3(RNG.normal(size=3))
    noisy = R + RNG.normal(size=(3, 3)) * 1e-6
    proj = project_rotation(noisy)
    before = np.abs(noisy @ noisy.T - np.eye(3)).max()
    after = np.abs(proj @ proj.T - np.eye(3)).max()
    assert after < before * 1e-3


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1))
def test_left_jacobian_integrates_exponential(seed):
    # J_l columns are the derivative of exp at w: exp((w) + J dt u) ~ exp(w)exp-ish;
    # verify via the series identity J_l(w) = sum hat(w)^k / (k+1)!
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= max(np.linalg.norm(axis), 1e-12)
    w = axis * rng.uniform(0.0, 2.5)
    W = hat_so3(w)
    series = np.eye(3)
    term = np.eye(3)
    for k in range(1, 30):
        term = term @ W / (k + 1)
        series = series + term
    assert np.abs(left_jacobian_so3(w) - series).max() < 1e-10
