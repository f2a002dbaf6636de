"""Legged-robot plant: strapdown mean dynamics, error-propagation matrix,
contact-switched process noise and the forward-kinematics position
observation.

Kinematics arrive as precomputed body-frame foot position/velocity pairs
(LegKinSample); joint-space forward kinematics belongs upstream, which keeps
this layer robot-agnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ObservationBlock
from .liegroup import GroupState, _hat_mul_batch, _unchecked, exp_so3, hat_so3

__all__ = [
    "NoiseConfig",
    "ImuSample",
    "LegKinSample",
    "ContactVector",
    "plant_dynamics",
    "plant_flow",
    "strapdown_step",
    "build_A",
    "build_Q",
    "build_q_diag",
    "build_position_observation",
    "velocity_observation_matrices",
]


def _vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = np.full(3, float(a))
    return a.reshape(3)


@dataclass
class NoiseConfig:
    """All process/measurement noise densities plus adaptation parameters.

    Std fields are continuous-time noise densities (unit / sqrt(Hz)) except
    ``kin_std`` and ``vel_kin_std`` which are per-sample measurement stds.
    ``foot_std`` and ``vel_kin_std`` are per-axis.  ``swing_std`` is the
    inflated foot-model noise used during swing (and for rejected legs).
    """

    gyro_std: float = 0.002          # rad/s/sqrt(Hz)
    accel_std: float = 0.05          # m/s^2/sqrt(Hz)
    gyro_bias_std: float = 1e-4      # rad/s^2/sqrt(Hz) random walk
    accel_bias_std: float = 1e-4     # m/s^3/sqrt(Hz) random walk
    foot_std: np.ndarray = field(default_factory=lambda: np.full(3, 0.02))
    swing_std: float = 100.0         # sqrt of the large swing noise density
    kin_std: float = 0.01            # m, forward-kinematics position noise
    vel_kin_std: np.ndarray = field(default_factory=lambda: np.full(3, 0.03))
    window: int = 10                 # innovation window length (5..10)
    alpha_max: float = 9.0
    slip_sigma: float = 7.81         # chi-square(3) 95% quantile
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    leg_reach: float = 0.6           # m, kinematics sanity bound

    def __post_init__(self):
        self.foot_std = _vec3(self.foot_std)
        self.vel_kin_std = _vec3(self.vel_kin_std)
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(3)
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.alpha_max < 1.0:
            raise ValueError("alpha_max must be >= 1")
        if self.slip_sigma <= 0.0:
            raise ValueError("slip_sigma must be positive")
        if np.any(self.foot_std <= 0.0) or self.swing_std <= 0.0:
            raise ValueError("noise densities must be positive")

    @property
    def foot_var(self) -> np.ndarray:
        return self.foot_std ** 2

    @property
    def swing_var(self) -> float:
        return self.swing_std ** 2

    @property
    def vel_kin_var(self) -> np.ndarray:
        return self.vel_kin_std ** 2


@dataclass(frozen=True)
class ImuSample:
    """One IMU sample: body-frame angular rate and specific force."""

    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gyro, dtype=float).reshape(3)
        a = np.asarray(self.accel, dtype=float).reshape(3)
        if not (np.isfinite(g).all() and np.isfinite(a).all()):
            raise ValueError("non-finite IMU sample")
        object.__setattr__(self, "gyro", g)
        object.__setattr__(self, "accel", a)


@dataclass(frozen=True)
class LegKinSample:
    """Per-leg body-frame foot position and velocity from the encoders."""

    rel_pos: np.ndarray  # (N, 3)
    rel_vel: np.ndarray  # (N, 3)

    def __post_init__(self):
        rp = np.asarray(self.rel_pos, dtype=float).reshape(-1, 3)
        rv = np.asarray(self.rel_vel, dtype=float).reshape(-1, 3)
        if rp.shape != rv.shape:
            raise ValueError("rel_pos / rel_vel shape mismatch")
        if not (np.isfinite(rp).all() and np.isfinite(rv).all()):
            raise ValueError("non-finite kinematics sample")
        object.__setattr__(self, "rel_pos", rp)
        object.__setattr__(self, "rel_vel", rv)

    @property
    def n_legs(self) -> int:
        return self.rel_pos.shape[0]

    def check_reach(self, reach: float):
        r = np.linalg.norm(self.rel_pos, axis=1).max()
        if r > reach:
            raise ValueError(f"foot position {r:.3f} m exceeds leg reach {reach} m")


@dataclass(frozen=True)
class ContactVector:
    """Per-leg contact flag and probability."""

    flag: np.ndarray  # (N,) bool
    prob: np.ndarray  # (N,) float in [0, 1]

    def __post_init__(self):
        flag = np.asarray(self.flag, dtype=bool).reshape(-1)
        prob = np.asarray(self.prob, dtype=float).reshape(-1)
        if flag.shape != prob.shape:
            raise ValueError("flag / prob shape mismatch")
        if np.any(prob < 0.0) or np.any(prob > 1.0):
            raise ValueError("contact probabilities must lie in [0, 1]")
        object.__setattr__(self, "flag", flag)
        object.__setattr__(self, "prob", prob)

    @classmethod
    def from_flags(cls, flags) -> "ContactVector":
        flags = np.asarray(flags, dtype=bool)
        return cls(flags, flags.astype(float))


def plant_dynamics(chi: GroupState, bias, imu: ImuSample, gravity):
    """Mean time derivatives (Rdot, vdot, pdot, feetdot) of the plant.

    IMU readings are bias-corrected; foot positions and biases are constant
    in the mean.
    """
    bias = np.asarray(bias, dtype=float).reshape(6)
    w = imu.gyro - bias[:3]
    a = imu.accel - bias[3:]
    return (
        chi.R @ hat_so3(w),
        chi.R @ a + np.asarray(gravity, dtype=float),
        chi.v.copy(),
        np.zeros_like(chi.feet),
    )


def plant_flow(chi: GroupState, u, gravity=(0.0, 0.0, -9.81)) -> np.ndarray:
    """Plant flow as a dense embedding matrix, for group-affinity checks.

    ``u`` is a (gyro, accel) pair of bias-corrected body-frame inputs.
    """
    w, a = u
    n = chi.n_feet
    F = np.zeros((5 + n, 5 + n))
    F[:3, :3] = chi.R @ hat_so3(w)
    F[:3, 3] = chi.R @ np.asarray(a, dtype=float) + np.asarray(gravity, dtype=float)
    F[:3, 4] = chi.v
    return F


def strapdown_step(chi: GroupState, bias, gyro, accel, gravity, T: float) -> GroupState:
    """Discretized mean dynamics over one sample period.

    R <- R exp(w T); v <- v + (R a + g) T; p <- p + v T + 0.5 (R a + g) T^2;
    feet constant.  The half-T^2 position term is a second-order refinement
    over plain Euler.
    """
    w = np.asarray(gyro, dtype=float) - bias[:3]
    a = np.asarray(accel, dtype=float) - bias[3:]
    acc = chi.R @ a + gravity
    return _unchecked(
        chi.R @ exp_so3(w * T),
        chi.v + acc * T,
        chi.p + chi.v * T + (0.5 * T * T) * acc,
        chi.feet,
    )


def build_A(chi_est: GroupState, cfg: NoiseConfig, out=None) -> np.ndarray:
    """Continuous error-propagation matrix at the current estimate.

    The bias-free top-left block contains only the gravity cross block and
    the velocity-to-position identity, so it is independent of the state;
    the last two block columns couple the gyro/accel bias errors through
    -R, -[v]x R, -[p]x R and -[r_i]x R.
    """
    n = chi_est.n_feet
    d = 15 + 3 * n
    if out is None:
        A = np.zeros((d, d))
    else:
        A = out
        A[:] = 0.0
    bg = d - 6
    ba = d - 3
    R = chi_est.R
    A[3:6, 0:3] = hat_so3(cfg.gravity)
    A[6, 3] = A[7, 4] = A[8, 5] = 1.0
    cross = _hat_mul_batch(
        np.vstack((chi_est.v[None, :], chi_est.p[None, :], chi_est.feet)), R)
    np.negative(R, out=A[0:3, bg:bg + 3])
    np.negative(cross[0], out=A[3:6, bg:bg + 3])
    np.negative(R, out=A[3:6, ba:ba + 3])
    np.negative(cross[1], out=A[6:9, bg:bg + 3])
    for i in range(n):
        np.negative(cross[2 + i], out=A[9 + 3 * i:12 + 3 * i, bg:bg + 3])
    return A


def build_q_diag(contacts: ContactVector, cfg: NoiseConfig, alpha=None,
                 rejected=None, out=None) -> np.ndarray:
    """Diagonal of the continuous process noise covariance.

    Contact feet get alpha-scaled foot-model noise, swing feet (and rejected
    legs) the large swing noise.  The position slot carries no direct noise.
    """
    n = contacts.flag.shape[0]
    d = 15 + 3 * n
    q = np.zeros(d) if out is None else out
    q[0:3] = cfg.gyro_std ** 2
    q[3:6] = cfg.accel_std ** 2
    q[6:9] = 0.0
    anchored = contacts.flag if rejected is None else contacts.flag & ~np.asarray(rejected)
    fv_eff = cfg.foot_var if alpha is None else alpha * cfg.foot_var
    q[9:d - 6] = np.where(anchored[:, None], fv_eff, cfg.swing_var).reshape(-1)
    q[d - 6:d - 3] = cfg.gyro_bias_std ** 2
    q[d - 3:d] = cfg.accel_bias_std ** 2
    return q


def build_Q(contacts: ContactVector, cfg: NoiseConfig, alpha=None,
            rejected=None) -> np.ndarray:
    """Process noise covariance (block diagonal, body coordinates)."""
    return np.diag(build_q_diag(contacts, cfg, alpha=alpha, rejected=rejected))


def build_position_observation(leg: int, kin: LegKinSample, chi_est: GroupState,
                               cfg: NoiseConfig) -> ObservationBlock:
    """Right-invariant forward-kinematics position observation for one leg.

    Y carries the measured body-frame foot position with +1 in the position
    slot and -1 in the leg's foot slot; H has -I at the position block and
    +I at that foot block, M is the estimated rotation, Ncov the kinematics
    noise.  Only call for legs in contact (the caller gates on contacts).
    """
    n = chi_est.n_feet
    d = 15 + 3 * n
    m = 5 + n
    Y = np.zeros(m)
    Y[:3] = kin.rel_pos[leg]
    Y[4] = 1.0
    Y[5 + leg] = -1.0
    b = np.zeros(m)
    b[4] = 1.0
    b[5 + leg] = -1.0
    H = np.zeros((3, d))
    H[:, 6:9] = -np.eye(3)
    H[:, 9 + 3 * leg:12 + 3 * leg] = np.eye(3)
    s = np.zeros((3, m))
    s[:, :3] = np.eye(3)
    return ObservationBlock(
        Y=Y,
        b=b,
        H=H,
        M=chi_est.R.copy(),
        Ncov=np.eye(3) * cfg.kin_std ** 2,
        s=s,
    )


def velocity_observation_matrices(chi_est: GroupState):
    """(H_v, M_v) of the velocity-kinematics observation.

    H_v selects the velocity error block, M_v = R injects the compound
    velocity noise; both enter only through quadratic forms.
    """
    n = chi_est.n_feet
    d = 15 + 3 * n
    H = np.zeros((3, d))
    H[:, 3:6] = np.eye(3)
    return H, chi_est.R.copy()
