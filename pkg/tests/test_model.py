import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiekf.core import FilterState
from aiekf.liegroup import (
    GroupState,
    compose,
    exp_se2n3,
    hat_so3,
    log_se2n3,
    inverse,
)
from aiekf.model import (
    ContactVector,
    ImuSample,
    LegKinSample,
    NoiseConfig,
    build_A,
    build_Q,
    build_position_observation,
    plant_dynamics,
    plant_flow,
    strapdown_step,
    velocity_observation_matrices,
)
from conftest import random_group_state

RNG = np.random.default_rng(31)
CFG = NoiseConfig()
G = np.array([0.0, 0.0, -9.81])


# ---------------------------------------------------------------- plant

def test_plant_hover_has_zero_derivatives():
    chi = random_group_state(RNG)
    imu = ImuSample(0.0, np.zeros(3), -(chi.R.T @ G))
    Rdot, vdot, pdot, feetdot = plant_dynamics(chi, np.zeros(6), imu, G)
    assert np.abs(Rdot).max() < 1e-15
    assert np.abs(vdot).max() < 1e-14
    assert np.abs(pdot - chi.v).max() == 0.0
    assert np.abs(feetdot).max() == 0.0


def test_plant_free_fall():
    chi = random_group_state(RNG)
    imu = ImuSample(0.0, np.zeros(3), np.zeros(3))
    _, vdot, _, _ = plant_dynamics(chi, np.zeros(6), imu, G)
    assert np.abs(vdot - G).max() < 1e-15


def test_plant_bias_correction_applied():
    chi = GroupState.identity(4)
    bias = np.array([0.1, -0.2, 0.3, 0.5, 0.0, -0.5])
    imu = ImuSample(0.0, bias[:3], bias[3:])
    Rdot, vdot, _, _ = plant_dynamics(chi, bias, imu, G)
    assert np.abs(Rdot).max() == 0.0
    assert np.abs(vdot - G).max() == 0.0


def test_plant_flow_group_affine_residual():
    from aiekf.core import check_group_affine

    res = check_group_affine(lambda chi, u: plant_flow(chi, u), samples=300,
                             rng=77)
    assert res < 1e-9


# ---------------------------------------------------------------- build_A

def test_build_a_identity_state_structure():
    chi = GroupState.identity(4)
    A = build_A(chi, CFG)
    expected = np.zeros((27, 27))
    expected[3:6, 0:3] = hat_so3(G)
    expected[6:9, 3:6] = np.eye(3)
    expected[0:3, 21:24] = -np.eye(3)
    expected[3:6, 24:27] = -np.eye(3)
    # with v = p = feet = 0 every bias cross-coupling block vanishes
    assert np.array_equal(A, expected)


def test_build_a_finite_difference_oracle():
    # compare A (xi, eps) against a finite difference of the nonlinear
    # multiplicative-error propagation, including the bias columns;
    # h balances integrator truncation against 1/h fp-noise amplification
    h = 1e-5
    for trial in range(10):
        rng = np.random.default_rng(500 + trial)
        truth = random_group_state(rng, scale=0.5)
        xi = rng.normal(size=21)
        xi *= 1e-6 / np.linalg.norm(xi)
        eps = rng.normal(size=6)
        eps *= 1e-6 / np.linalg.norm(eps)
        bias_true = np.zeros(6)
        bias_est = bias_true + eps  # error convention: eps = est - true
        est = compose(exp_se2n3(xi), truth)

        gyro = rng.normal(size=3)
        accel = rng.normal(size=3) * 3.0
        truth_h = strapdown_step(truth, bias_true, gyro, accel, G, h)
        est_h = strapdown_step(est, bias_est, gyro, accel, G, h)
        xi_h = log_se2n3(compose(est_h, inverse(truth_h)))
        dxi_num = (xi_h - xi) / h

        A = build_A(est, CFG)
        dxi_ana = A[:21, :] @ np.concatenate([xi, eps])
        scale = max(np.linalg.norm(dxi_ana), 1e-12)
        assert np.linalg.norm(dxi_num - dxi_ana) / scale < 1e-4


def test_build_a_bias_free_block_state_independent():
    A1 = build_A(random_group_state(RNG), CFG)
    A2 = build_A(random_group_state(RNG), CFG)
    assert np.array_equal(A1[:21, :21], A2[:21, :21])


# ---------------------------------------------------------------- build_Q

def test_build_q_all_contact_unit_alpha():
    contacts = ContactVector.from_flags([True] * 4)
    Q = build_Q(contacts, CFG)
    for leg in range(4):
        s = slice(9 + 3 * leg, 12 + 3 * leg)
        assert np.array_equal(np.diag(Q[s, s]), CFG.foot_var)


def test_build_q_swing_overrides_alpha():
    contacts = ContactVector.from_flags([True, True, False, True])
    alpha = np.full((4, 3), 5.0)
    Q = build_Q(contacts, CFG, alpha=alpha)
    s = slice(15, 18)  # leg 2
    assert np.array_equal(np.diag(Q[s, s]), np.full(3, CFG.swing_var))


def test_build_q_alpha_scales_per_axis():
    contacts = ContactVector.from_flags([True] * 4)
    alpha = np.ones((4, 3))
    alpha[0] = [9.0, 1.0, 1.0]
    Q = build_Q(contacts, CFG, alpha=alpha)
    assert Q[9, 9] == 9.0 * CFG.foot_var[0]
    assert Q[10, 10] == CFG.foot_var[1]


def test_build_q_rejected_leg_gets_swing_noise():
    contacts = ContactVector.from_flags([True] * 4)
    alpha = np.full((4, 3), 2.0)
    rejected = np.array([False, True, False, False])
    Q = build_Q(contacts, CFG, alpha=alpha, rejected=rejected)
    s = slice(12, 15)
    assert np.array_equal(np.diag(Q[s, s]), np.full(3, CFG.swing_var))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 15), st.lists(st.floats(1.0, 9.0), min_size=12, max_size=12))
def test_build_q_always_psd(mask, alpha_flat):
    contacts = ContactVector.from_flags([(mask >> i) & 1 for i in range(4)])
    alpha = np.array(alpha_flat).reshape(4, 3)
    Q = build_Q(contacts, CFG, alpha=alpha)
    assert np.all(np.diag(Q) >= 0.0)
    assert np.array_equal(Q, np.diag(np.diag(Q)))


# ----------------------------------------------- position observation

def _exact_kin(chi):
    return LegKinSample((chi.feet - chi.p) @ chi.R, np.zeros((4, 3)))


def test_position_observation_zero_residual_at_truth():
    chi = random_group_state(RNG)
    kin = _exact_kin(chi)
    for leg in range(4):
        blk = build_position_observation(leg, kin, chi, CFG)
        z = blk.s @ (chi.as_matrix() @ blk.Y - blk.b)
        assert np.abs(z).max() < 1e-12


def test_position_observation_h_matches_wedge_rule():
    chi = random_group_state(RNG)
    kin = _exact_kin(chi)
    from conftest import se_wedge

    for leg in range(4):
        blk = build_position_observation(leg, kin, chi, CFG)
        for _ in range(10):
            xi = RNG.normal(size=21)
            lhs = blk.H[:, :21] @ xi
            rhs = -blk.s @ (se_wedge(xi, 4) @ blk.b)
            assert np.abs(lhs - rhs).max() < 1e-12
        assert np.abs(blk.H[:, 21:]).max() == 0.0


def test_position_observation_linearization():
    truth = random_group_state(RNG, scale=0.3)
    kin = _exact_kin(truth)
    xi = np.zeros(21)
    xi[6:9] = [0.004, -0.003, 0.002]   # position-error block only
    est = compose(exp_se2n3(xi), truth)
    for leg in range(4):
        blk = build_position_observation(leg, kin, est, CFG)
        z = blk.s @ (est.as_matrix() @ blk.Y - blk.b)
        predicted = -(-xi[6:9] + xi[9 + 3 * leg:12 + 3 * leg])  # -H xi
        assert np.abs(z - predicted).max() < 10.0 * float(xi @ xi)


def test_position_observation_yaw_null_space():
    # rotating the whole world about gravity moves body and feet together:
    # the residual stays zero and H carries no yaw information
    truth = random_group_state(RNG, scale=0.3)
    kin = _exact_kin(truth)
    yaw = np.zeros(21)
    yaw[2] = 0.3
    est = compose(exp_se2n3(yaw), truth)
    for leg in range(4):
        blk = build_position_observation(leg, kin, est, CFG)
        z = blk.s @ (est.as_matrix() @ blk.Y - blk.b)
        assert np.abs(z).max() < 1e-12
        assert np.abs(blk.H[:, :21] @ yaw).max() < 1e-15


def test_velocity_observation_matrices_shape():
    chi = random_group_state(RNG)
    H, M = velocity_observation_matrices(chi)
    expected = np.zeros((3, 27))
    expected[:, 3:6] = np.eye(3)
    assert np.array_equal(H, expected)
    assert np.array_equal(M, chi.R)


# ---------------------------------------------------------------- types

def test_leg_kin_sample_reach_check():
    kin = LegKinSample(np.ones((4, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        kin.check_reach(0.6)
    kin2 = LegKinSample(np.full((4, 3), 0.2), np.zeros((4, 3)))
    kin2.check_reach(0.6)


def test_contact_vector_validates_probability():
    with pytest.raises(ValueError):
        ContactVector(np.array([True]), np.array([1.2]))


def test_imu_sample_rejects_nonfinite():
    with pytest.raises(ValueError):
        ImuSample(0.0, np.array([np.inf, 0, 0]), np.zeros(3))


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(window=0)
    with pytest.raises(ValueError):
        NoiseConfig(alpha_max=0.5)
    with pytest.raises(ValueError):
        NoiseConfig(slip_sigma=0.0)


def test_strapdown_hover_is_static():
    chi = random_group_state(RNG)
    accel = -(chi.R.T @ G)
    out = strapdown_step(chi, np.zeros(6), np.zeros(3), accel, G, 0.001)
    assert np.abs(out.v - chi.v).max() < 1e-14
    assert np.abs(out.R - chi.R).max() == 0.0
