"""Per-tick filter pipeline.

One tick runs: contact detection (or truth contacts), mean/covariance
propagation with nominal noise, adaptive foot-noise re-prediction (if
enabled), slip-rejection re-prediction (if enabled), then the stacked
kinematic position update for contact legs that were not rejected.  Both
the adaptive innovations and the slip gate are evaluated against the same
nominal prior.

Two backends share these semantics: a pure-numpy reference path built from
the library operations, and a jitted fast path (the default when numba is
importable) used to hold the per-tick latency budget.  A test pins their
equivalence.

A pipeline instance owns its state and is single-threaded; run distinct
instances for concurrent variants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _fastpath
from .adaptive import InnovationWindow, estimate_alpha_batch
from .contact import ContactFilterConfig, ContactFuser, GaitSchedule, GmResidual
from .core import (
    CovariancePredictor,
    FilterFaultError,
    FilterState,
    ObservationBlock,
    SingularUpdateError,
    bias_adjoint,
    update,
)
from .liegroup import GroupState, hat_so3
from .model import (
    ContactVector,
    NoiseConfig,
    build_A,
    build_q_diag,
    strapdown_step,
)
from .sliprej import innovation_gate_covariance

__all__ = ["FilterPipeline", "StepDiagnostics", "DivergenceError"]

_TRACE_LIMIT = 1e9


class DivergenceError(FilterFaultError):
    """Filter divergence: non-finite state or covariance trace > 1e9."""


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-tick diagnostics for tracing and evaluation."""

    contact_flag: np.ndarray   # (N,) bool
    contact_prob: np.ndarray   # (N,)
    alpha: np.ndarray          # (N, 3); 1 for swing/inactive legs
    d: np.ndarray              # (N,) squared Mahalanobis distance; 0 if unused
    rejected: np.ndarray       # (N,) bool
    updated: bool
    update_skipped: bool       # singular innovation covariance this tick
    innovation: np.ndarray | None = None   # (N, 3), zero rows for swing legs
    vel_prior_cov: np.ndarray | None = None  # nominal-prior velocity covariance


class FilterPipeline:
    """Replayable filter with selectable adaptive (FE) and slip (SR) stages."""

    def __init__(self, noise: NoiseConfig, n_legs: int = 4, dt: float = 1e-3,
                 use_fe: bool = False, use_sr: bool = False,
                 gait: GaitSchedule | None = None,
                 contact_cfg: ContactFilterConfig | None = None,
                 contact_source: str = "detected",
                 discretization: str = "first_order",
                 collect_innovations: bool = False,
                 backend: str = "auto"):
        if contact_source not in ("detected", "truth"):
            raise ValueError("contact_source must be 'detected' or 'truth'")
        if contact_source == "detected" and gait is None:
            raise ValueError("contact detection needs a gait schedule")
        if backend == "auto":
            backend = "fast" if _fastpath.HAVE_NUMBA else "reference"
        if backend == "fast" and not _fastpath.HAVE_NUMBA:
            raise ValueError("fast backend requested but numba is unavailable")
        if backend == "fast" and discretization != "first_order":
            backend = "reference"  # exact discretization only on the reference path
        self.backend = backend
        self.noise = noise
        self.n_legs = n_legs
        self.dt = dt
        self.use_fe = use_fe
        self.use_sr = use_sr
        self.gait = gait
        self.contact_source = contact_source
        self.discretization = discretization
        self.collect_innovations = collect_innovations
        self.contact_cfg = contact_cfg or ContactFilterConfig()
        self.window = InnovationWindow(n_legs, noise.window)
        self.gm = GmResidual(n_legs, dt, self.contact_cfg)
        self.fuser = ContactFuser(n_legs, self.contact_cfg)
        self.fault_count = 0
        self._initialized = False
        self._prev_flags = np.zeros(n_legs, dtype=bool)
        d = 15 + 3 * n_legs
        self._dim = d
        # live state buffers (fast path mutates these in place)
        self._R = np.eye(3)
        self._v = np.zeros(3)
        self._p = np.zeros(3)
        self._feet = np.zeros((n_legs, 3))
        self._bias = np.zeros(6)
        self._P = np.eye(d)
        # scratch for the reference path
        self._A = np.zeros((d, d))
        self._adbar = np.zeros((d, d))
        self._q = np.zeros(d)
        # constant pieces of the per-leg position observation blocks
        m = 5 + n_legs
        self._obs_Ncov = np.eye(3) * noise.kin_std ** 2
        self._obs_s = np.zeros((3, m))
        self._obs_s[:, :3] = np.eye(3)
        self._obs_Y0 = []
        self._obs_b = []
        self._obs_H = []
        for leg in range(n_legs):
            Y0 = np.zeros(m)
            Y0[4] = 1.0
            Y0[5 + leg] = -1.0
            b = Y0.copy()
            H = np.zeros((3, d))
            H[:, 6:9] = -np.eye(3)
            H[:, 9 + 3 * leg:12 + 3 * leg] = np.eye(3)
            self._obs_Y0.append(Y0)
            self._obs_b.append(b)
            self._obs_H.append(H)
        # gait constants for the fast path
        if gait is not None:
            self._gait_period = gait.period
            self._gait_duty = gait.duty
            self._gait_offsets = np.asarray(gait.offsets, dtype=float)
        else:
            self._gait_period = 1.0
            self._gait_duty = 1.0
            self._gait_offsets = np.zeros(n_legs)
        self._no_truth = np.zeros(n_legs, dtype=bool)
        self._zero_force = np.zeros(n_legs)

    # ------------------------------------------------------------------

    def initialize(self, R, v, p, rel_pos, bias=None, *,
                   att_std: float = 0.03, vel_std: float = 0.05,
                   pos_std: float = 0.01, foot_std: float = 0.02,
                   gyro_bias_std: float = 0.005, accel_bias_std: float = 0.05):
        """Seed the state; feet are placed from the first kinematics sample."""
        R = np.asarray(R, dtype=float)
        v = np.asarray(v, dtype=float).reshape(3)
        p = np.asarray(p, dtype=float).reshape(3)
        rel_pos = np.asarray(rel_pos, dtype=float).reshape(self.n_legs, 3)
        GroupState(R, v, p, rel_pos @ R.T + p)  # validates the seed
        self._R[:] = R
        self._v[:] = v
        self._p[:] = p
        self._feet[:] = rel_pos @ R.T + p
        self._bias[:] = 0.0 if bias is None else np.asarray(bias, dtype=float)
        d = self._dim
        diag = np.empty(d)
        diag[0:3] = att_std ** 2
        diag[3:6] = vel_std ** 2
        diag[6:9] = pos_std ** 2
        diag[9:d - 6] = foot_std ** 2
        diag[d - 6:d - 3] = gyro_bias_std ** 2
        diag[d - 3:d] = accel_bias_std ** 2
        self._P[:] = np.diag(diag)
        self._prev_flags[:] = False
        self.window = InnovationWindow(self.n_legs, self.noise.window)
        self.gm = GmResidual(self.n_legs, self.dt, self.contact_cfg)
        self.fuser = ContactFuser(self.n_legs, self.contact_cfg)
        self.fault_count = 0
        self._initialized = True

    @property
    def state(self) -> FilterState:
        """Validated snapshot of the current estimate."""
        chi = GroupState(self._R.copy(), self._v.copy(), self._p.copy(),
                         self._feet.copy())
        return FilterState(chi, self._bias.copy(), self._P.copy())

    def estimate_arrays(self):
        """Live views (R, v, p, feet, bias, P); copy before storing."""
        return self._R, self._v, self._p, self._feet, self._bias, self._P

    # ------------------------------------------------------------------

    def step(self, t, gyro, accel, rel_pos, rel_vel, force=None,
             true_contact=None) -> StepDiagnostics:
        """Advance one tick; raises DivergenceError on numerical collapse."""
        if not self._initialized:
            raise RuntimeError("pipeline not initialized")
        if self.contact_source == "truth" and true_contact is None:
            raise ValueError("truth contacts requested but none supplied")
        if self.backend == "fast":
            return self._step_fast(t, gyro, accel, rel_pos, rel_vel, force,
                                   true_contact)
        return self._step_reference(t, gyro, accel, rel_pos, rel_vel, force,
                                    true_contact)

    # ---- fast path ----------------------------------------------------

    def _step_fast(self, t, gyro, accel, rel_pos, rel_vel, force,
                   true_contact) -> StepDiagnostics:
        cfg = self.noise
        cc = self.contact_cfg
        n = self.n_legs
        truth_mode = self.contact_source == "truth"
        out_alpha = np.empty((n, 3))
        out_d = np.empty(n)
        out_rejected = np.empty(n, dtype=bool)
        out_prob = np.empty(n)
        out_flag = np.empty(n, dtype=bool)
        out_innov = np.empty((n, 3))
        out_pvv = np.empty((3, 3))
        status = _fastpath.tick(
            self._R, self._v, self._p, self._feet, self._bias, self._P,
            float(t), np.asarray(gyro, dtype=float),
            np.asarray(accel, dtype=float),
            np.ascontiguousarray(rel_pos, dtype=float),
            np.ascontiguousarray(rel_vel, dtype=float),
            self._zero_force if force is None else np.asarray(force, dtype=float),
            self.gm.force, self.fuser.prob, self.fuser.var, self.fuser.flag,
            self._prev_flags,
            truth_mode,
            self._no_truth if true_contact is None
            else np.ascontiguousarray(true_contact, dtype=bool),
            self.window.buf, self.window.idx, self.window.count,
            self.use_fe, self.use_sr, self.collect_innovations,
            cfg.gravity, self.dt,
            cfg.gyro_std ** 2, cfg.accel_std ** 2,
            cfg.gyro_bias_std ** 2, cfg.accel_bias_std ** 2,
            cfg.foot_var, cfg.swing_var, cfg.vel_kin_var,
            cfg.kin_std ** 2, cfg.alpha_max, cfg.slip_sigma,
            self._gait_period, self._gait_duty, self._gait_offsets,
            self.gm.gain, cc.force_center, cc.force_scale, cc.prior_pull,
            cc.process_var, cc.meas_var, cc.on_threshold, cc.off_threshold,
            out_alpha, out_d, out_rejected, out_prob, out_flag,
            out_innov, out_pvv)
        if status == 3:
            raise DivergenceError(f"filter diverged at t={float(t):.3f}")
        if status == 2:
            self.fault_count += 1
        return StepDiagnostics(
            contact_flag=out_flag, contact_prob=out_prob, alpha=out_alpha,
            d=out_d, rejected=out_rejected, updated=status == 0,
            update_skipped=status == 2,
            innovation=out_innov if self.collect_innovations else None,
            vel_prior_cov=out_pvv if self.collect_innovations else None)

    # ---- reference path -------------------------------------------------

    def _contacts(self, t, force, true_contact) -> ContactVector:
        if self.contact_source == "truth":
            flags = np.asarray(true_contact, dtype=bool)
            return ContactVector(flags, flags.astype(float))
        f = self.gm.step(force)
        prob, _, flags = self.fuser.step(self.gait.stance_prior(t), f)
        return ContactVector(flags, prob.copy())

    def _step_reference(self, t, gyro, accel, rel_pos, rel_vel, force,
                        true_contact) -> StepDiagnostics:
        cfg = self.noise
        n = self.n_legs
        contacts = self._contacts(t, force, true_contact)
        flags = contacts.flag

        fresh = flags & ~self._prev_flags
        if fresh.any():
            for leg in np.nonzero(fresh)[0]:
                self.window.reset(int(leg))
        self._prev_flags = flags.copy()

        state = FilterState(
            GroupState(self._R.copy(), self._v.copy(), self._p.copy(),
                       self._feet.copy()),
            self._bias.copy(), self._P.copy())
        bias = state.bias
        chi_prior = strapdown_step(state.chi, bias, gyro, accel, cfg.gravity, self.dt)
        A = build_A(chi_prior, cfg, out=self._A)
        ad_bar = bias_adjoint(chi_prior, out=self._adbar)
        predictor = CovariancePredictor(state.P, A, self.dt, ad_bar,
                                        self.discretization)
        q_nom = build_q_diag(contacts, cfg, out=self._q)
        P_prior = predictor.predict(q_nom)

        alpha = np.ones((n, 3))
        d_val = np.zeros(n)
        rejected = np.zeros(n, dtype=bool)
        legs = np.nonzero(flags)[0]
        innovation = None
        vel_prior_cov = None
        if self.collect_innovations:
            vel_prior_cov = P_prior[3:6, 3:6].copy()

        if legs.size and (self.use_fe or self.use_sr or self.collect_innovations):
            R = chi_prior.R
            w = np.asarray(gyro, dtype=float) - bias[:3]
            hat_w = hat_so3(w)
            e_all = (-(rel_pos[legs] @ hat_w.T + rel_vel[legs]) @ R.T
                     - chi_prior.v)
            if self.collect_innovations:
                innovation = np.zeros((n, 3))
                innovation[legs] = e_all
            if self.use_fe:
                U_all = self.window.push_many(legs, e_all)
                alpha[legs] = estimate_alpha_batch(U_all, P_prior, chi_prior, cfg)
            if self.use_sr:
                S = innovation_gate_covariance(P_prior, chi_prior, cfg)
                try:
                    L = np.linalg.cholesky(S)
                    piv = np.diag(L)
                    if (piv.max() / piv.min()) ** 2 > 1e12:
                        raise np.linalg.LinAlgError
                    y = np.linalg.solve(L, e_all.T)
                    dd = np.einsum("ij,ij->j", y, y)
                except np.linalg.LinAlgError:
                    dd = np.full(legs.size, np.inf)
                d_val[legs] = dd
                rejected[legs] = dd > cfg.slip_sigma

            if self.use_fe and np.any(alpha > 1.0):
                q_fe = build_q_diag(contacts, cfg, alpha=alpha)
                P_prior = predictor.predict(q_fe)
            if self.use_sr and rejected.any():
                q_sr = build_q_diag(contacts, cfg,
                                    alpha=alpha if self.use_fe else None,
                                    rejected=rejected)
                P_prior = predictor.predict(q_sr)

        prior = FilterState(chi_prior, bias, P_prior)
        upd_legs = np.nonzero(flags & ~rejected)[0]
        updated = False
        skipped = False
        new_state = prior
        if upd_legs.size:
            blocks = []
            R_est = chi_prior.R
            for i in upd_legs:
                Y = self._obs_Y0[i].copy()
                Y[:3] = rel_pos[i]
                blocks.append(ObservationBlock(
                    Y=Y, b=self._obs_b[i], H=self._obs_H[i], M=R_est,
                    Ncov=self._obs_Ncov, s=self._obs_s))
            try:
                new_state = update(prior, blocks)
                updated = True
            except SingularUpdateError:
                self.fault_count += 1
                skipped = True

        self._R[:] = new_state.chi.R
        self._v[:] = new_state.chi.v
        self._p[:] = new_state.chi.p
        self._feet[:] = new_state.chi.feet
        self._bias[:] = new_state.bias
        self._P[:] = new_state.P

        tr = float(np.trace(self._P))
        finite = math.isfinite(tr + float(self._R.sum() + self._v.sum()
                                          + self._p.sum() + self._feet.sum()
                                          + self._bias.sum()))
        if not finite or tr > _TRACE_LIMIT:
            raise DivergenceError(f"filter diverged at t={float(t):.3f}")

        return StepDiagnostics(contact_flag=flags, contact_prob=contacts.prob,
                               alpha=alpha, d=d_val, rejected=rejected,
                               updated=updated, update_skipped=skipped,
                               innovation=innovation,
                               vel_prior_cov=vel_prior_cov)
