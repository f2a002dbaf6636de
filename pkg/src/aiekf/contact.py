"""Contact detection without contact sensors.

A gait-schedule prior is fused with a disturbance-force estimate through a
per-leg scalar Kalman filter.  The force evidence channel comes from the
log (the simulator emits noisy ground-reaction forces; a real robot would
supply its own momentum-residual estimate upstream) and is low-pass
filtered before fusion.  Binary flags apply hysteresis to the fused
probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaitSchedule",
    "ContactFilterConfig",
    "GmResidual",
    "ContactFuser",
]

_GAIT_PRESETS = {
    # gait: (period s, duty factor, per-leg phase offsets FL FR RL RR)
    "trot": (0.4, 0.6, (0.0, 0.5, 0.5, 0.0)),
    "flying_trot": (0.3, 0.35, (0.0, 0.5, 0.5, 0.0)),
    "pronk": (0.4, 0.4, (0.0, 0.0, 0.0, 0.0)),
    "stand": (1.0, 1.0, (0.0, 0.0, 0.0, 0.0)),
}


@dataclass(frozen=True)
class GaitSchedule:
    """Periodic stance schedule: phase offsets plus a duty factor."""

    gait: str
    period: float
    duty: float
    offsets: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.duty <= 1.0:
            raise ValueError("duty factor must lie in (0, 1]")
        if self.period <= 0.0:
            raise ValueError("gait period must be positive")
        object.__setattr__(self, "offsets",
                           np.asarray(self.offsets, dtype=float).reshape(-1))

    @classmethod
    def preset(cls, gait: str) -> "GaitSchedule":
        if gait not in _GAIT_PRESETS:
            raise ValueError(f"unknown gait {gait!r}; options: {sorted(_GAIT_PRESETS)}")
        period, duty, offsets = _GAIT_PRESETS[gait]
        return cls(gait=gait, period=period, duty=duty, offsets=np.array(offsets))

    @property
    def n_legs(self) -> int:
        return self.offsets.shape[0]

    def phase(self, t) -> np.ndarray:
        """Fractional gait phase of each leg, in [0, 1)."""
        t = np.asarray(t, dtype=float)
        return (t[..., None] / self.period - self.offsets) % 1.0

    def in_stance(self, t) -> np.ndarray:
        ph = self.phase(t)
        if self.duty >= 1.0:
            return np.ones_like(ph, dtype=bool)
        return ph < self.duty

    def stance_prior(self, t) -> np.ndarray:
        """Prior contact probability of each leg (1 in scheduled stance)."""
        return self.in_stance(t).astype(float)


@dataclass
class ContactFilterConfig:
    """Gains for force filtering, fusion and hysteresis.

    Non-physical tuning constants; the force-to-probability squash uses a
    logistic centered on ``force_center`` with slope scale ``force_scale``.
    """

    lpf_cutoff_hz: float = 30.0
    force_center: float = 25.0   # N, ~10% of robot weight
    force_scale: float = 8.0     # N
    prior_pull: float = 0.7      # per-step pull toward the schedule prior
    process_var: float = 0.05
    meas_var: float = 0.02
    on_threshold: float = 0.6
    off_threshold: float = 0.4
    init_prob: float = 0.5
    init_var: float = 0.25


class GmResidual:
    """First-order low-pass observer on the per-leg force evidence channel."""

    def __init__(self, n_legs: int, dt: float, cfg: ContactFilterConfig | None = None):
        self.cfg = cfg or ContactFilterConfig()
        tau = 1.0 / (2.0 * math.pi * self.cfg.lpf_cutoff_hz)
        self.gain = 1.0 - math.exp(-dt / tau)
        self.force = np.zeros(n_legs)

    def step(self, raw_force) -> np.ndarray:
        """Filtered disturbance-force estimate (negatives are admitted)."""
        self.force += self.gain * (np.asarray(raw_force, dtype=float) - self.force)
        return self.force.copy()


class ContactFuser:
    """Per-leg scalar KF fusing the gait prior with force evidence.

    Predict pulls the probability toward the schedule prior; the update uses
    a logistic squash of the (non-negative) force estimate as a
    pseudo-measurement.  Flags switch on at ``on_threshold`` and off at
    ``off_threshold``.
    """

    def __init__(self, n_legs: int, cfg: ContactFilterConfig | None = None):
        self.cfg = cfg or ContactFilterConfig()
        self.prob = np.full(n_legs, self.cfg.init_prob)
        self.var = np.full(n_legs, self.cfg.init_var)
        self.flag = np.zeros(n_legs, dtype=bool)

    def step(self, prior, force) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fuse one tick; returns (prob, var, flag)."""
        c = self.cfg
        prior = np.asarray(prior, dtype=float)
        f = np.maximum(np.asarray(force, dtype=float), 0.0)
        z = 1.0 / (1.0 + np.exp(-(f - c.force_center) / c.force_scale))
        x = self.prob + c.prior_pull * (prior - self.prob)
        var = (1.0 - c.prior_pull) ** 2 * self.var + c.process_var
        gain = var / (var + c.meas_var)
        x = x + gain * (z - x)
        np.clip(x, 0.0, 1.0, out=x)
        var = np.maximum((1.0 - gain) * var, 1e-9)
        self.prob = x
        self.var = var
        # arrays are rebound (never mutated) so returning them is safe
        self.flag = (x >= c.on_threshold) | (self.flag & (x > c.off_threshold))
        return self.prob, self.var, self.flag
