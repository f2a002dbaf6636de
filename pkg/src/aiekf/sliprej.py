"""Mahalanobis-distance slip gate on the velocity-kinematics innovation.

A leg whose squared Mahalanobis distance exceeds the threshold has its foot
process noise set to the swing level for the tick, the covariance prediction
is re-run from the snapshot, and the leg is excluded from the position
update (swing legs receive no update, and a slipping leg is treated the
same way).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import LinearizedDynamics, predict_covariance
from .liegroup import GroupState
from .model import ContactVector, NoiseConfig, build_Q

__all__ = ["SlipDecision", "mahalanobis", "apply_rejection"]

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SlipDecision:
    """Squared Mahalanobis distance and gate outcome for one leg."""

    leg: int
    d: float
    rejected: bool


def innovation_gate_covariance(P_minus: np.ndarray, chi_est: GroupState,
                               cfg: NoiseConfig) -> np.ndarray:
    """S = H_v P- H_v^T + M_v Q_v M_v^T; shared by every leg this tick."""
    R = chi_est.R
    return P_minus[3:6, 3:6] + R @ np.diag(cfg.vel_kin_var) @ R.T


def mahalanobis(e: np.ndarray, P_minus: np.ndarray, chi_est: GroupState,
                cfg: NoiseConfig, leg: int = 0, S=None) -> SlipDecision:
    """Gate one leg's innovation.

    Solves with a Cholesky factor; an ill-conditioned S (estimated condition
    above 1e12) is treated as a rejection, the conservative choice.
    """
    if S is None:
        S = innovation_gate_covariance(P_minus, chi_est, cfg)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return SlipDecision(leg=leg, d=float("inf"), rejected=True)
    piv = np.diag(L)
    if (piv.max() / piv.min()) ** 2 > _COND_LIMIT:
        return SlipDecision(leg=leg, d=float("inf"), rejected=True)
    y = np.linalg.solve(L, np.asarray(e, dtype=float))
    d = float(y @ y)
    return SlipDecision(leg=leg, d=d, rejected=d > cfg.slip_sigma)


def apply_rejection(P_snapshot: np.ndarray, dyn: LinearizedDynamics,
                    ad_bar: np.ndarray, contacts: ContactVector,
                    alpha, rejected: np.ndarray,
                    cfg: NoiseConfig) -> np.ndarray:
    """Re-run the covariance prediction with rejected legs at swing noise.

    Rejected legs override any adaptive alpha for this tick (the alpha value
    is still reported in the trace).  With nothing rejected the result is
    identical to the adaptive prediction.
    """
    Qc = build_Q(contacts, cfg, alpha=alpha, rejected=rejected)
    return predict_covariance(P_snapshot, replace(dyn, Qc=Qc), ad_bar)
