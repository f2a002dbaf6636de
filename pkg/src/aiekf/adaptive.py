"""Foot-model noise estimation from velocity-kinematics innovations.

Per contact leg, the innovation of a static-foot velocity observation is
averaged over a short moving window of outer products; covariance matching
against the predicted innovation covariance yields an estimate of the
unmodeled foot noise, which scales the per-axis foot process noise by a
clipped factor alpha in [1, alpha_max].  The covariance prediction is then
re-run from the pre-prediction snapshot with the scaled noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import LinearizedDynamics, predict_covariance
from .liegroup import GroupState
from .model import ContactVector, ImuSample, LegKinSample, NoiseConfig, build_Q

__all__ = [
    "VelocityInnovation",
    "InnovationWindow",
    "velocity_innovation",
    "window_covariance",
    "estimate_alpha",
    "apply_adaptive_prediction",
]


@dataclass(frozen=True)
class VelocityInnovation:
    """Velocity-kinematics innovation of one leg; valid only in contact."""

    leg: int
    e: np.ndarray
    valid: bool


class InnovationWindow:
    """Per-leg ring buffers of the last m innovations.

    Unfilled slots contribute zero to the windowed mean.  Buffers are reset
    at every swing-to-contact transition so stale swing-phase innovations
    never leak into a new stance.
    """

    def __init__(self, n_legs: int, m: int):
        if m < 1:
            raise ValueError("window length must be >= 1")
        self.m = m
        self.buf = np.zeros((n_legs, m, 3))
        self.idx = np.zeros(n_legs, dtype=int)
        self.count = np.zeros(n_legs, dtype=int)

    def reset(self, leg: int):
        self.buf[leg] = 0.0
        self.idx[leg] = 0
        self.count[leg] = 0

    def push(self, leg: int, e) -> np.ndarray:
        """Insert an innovation and return the windowed covariance U."""
        self.buf[leg, self.idx[leg]] = e
        self.idx[leg] = (self.idx[leg] + 1) % self.m
        self.count[leg] = min(self.count[leg] + 1, self.m)
        b = self.buf[leg]
        return (b.T @ b) / self.m

    def push_many(self, legs, e_rows) -> np.ndarray:
        """Vectorized push for several legs; returns stacked U matrices."""
        idx = self.idx[legs]
        self.buf[legs, idx] = e_rows
        self.idx[legs] = (idx + 1) % self.m
        self.count[legs] = np.minimum(self.count[legs] + 1, self.m)
        b = self.buf[legs]
        return np.einsum("lmi,lmj->lij", b, b) / self.m


def velocity_innovation(chi_est: GroupState, bias, kin: LegKinSample,
                        imu: ImuSample, leg: int,
                        in_contact: bool = True) -> VelocityInnovation:
    """Innovation of the static-foot velocity observation for one leg.

    e = -R ( w x p_rel + v_rel ) - v, with the gyro bias-corrected; zero for
    a truly static foot with exact state and noiseless sensors, and exactly
    the negated slip velocity when the foot slides.
    """
    bias = np.asarray(bias, dtype=float).reshape(6)
    w = imu.gyro - bias[:3]
    e = -chi_est.R @ (np.cross(w, kin.rel_pos[leg]) + kin.rel_vel[leg]) - chi_est.v
    return VelocityInnovation(leg=leg, e=e, valid=bool(in_contact))


def window_covariance(window: InnovationWindow, innov: VelocityInnovation) -> np.ndarray:
    """Push a valid innovation and return the windowed covariance U."""
    if not innov.valid:
        raise ValueError("cannot window an invalid (swing-phase) innovation")
    return window.push(innov.leg, innov.e)


def estimate_alpha(U: np.ndarray, P_minus: np.ndarray, chi_est: GroupState,
                   cfg: NoiseConfig) -> np.ndarray:
    """Per-axis foot-noise scale from covariance matching.

    The unmodeled foot noise estimate is R^T (U - P_vv) R - Q_v; each
    diagonal entry is divided by the nominal foot noise and clipped to
    [1, alpha_max].  Negative estimates (sampling noise) clamp to 1.
    """
    R = chi_est.R
    Quf = R.T @ (U - P_minus[3:6, 3:6]) @ R - np.diag(cfg.vel_kin_var)
    ratio = np.diag(Quf) / cfg.foot_var
    return np.clip(ratio, 1.0, cfg.alpha_max)


def estimate_alpha_batch(U_all: np.ndarray, P_minus: np.ndarray,
                         chi_est: GroupState, cfg: NoiseConfig) -> np.ndarray:
    """estimate_alpha over stacked windows (k, 3, 3) in one pass."""
    R = chi_est.R
    quf_diag = (np.einsum("ji,ljk,ki->li", R, U_all - P_minus[3:6, 3:6], R)
                - cfg.vel_kin_var)
    return np.clip(quf_diag / cfg.foot_var, 1.0, cfg.alpha_max)


def apply_adaptive_prediction(P_snapshot: np.ndarray, dyn: LinearizedDynamics,
                              ad_bar: np.ndarray, contacts: ContactVector,
                              alpha: np.ndarray, cfg: NoiseConfig) -> np.ndarray:
    """Re-run the covariance prediction with alpha-scaled foot noise.

    ``P_snapshot`` is the posterior covariance from before the nominal
    prediction; the mean is untouched.  With alpha == 1 everywhere this
    reproduces the nominal prediction bit for bit (same code path, same
    inputs).
    """
    Qc = build_Q(contacts, cfg, alpha=alpha)
    return predict_covariance(P_snapshot, replace(dyn, Qc=Qc), ad_bar)
