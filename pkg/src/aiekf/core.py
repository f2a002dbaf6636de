"""Discrete-time right-invariant EKF core.

State/covariance propagation, stacked right-invariant measurement updates
and gain computation, with gyro/accel biases appended additively to the
error state.  Error ordering is (rot, vel, pos, foot_1..N, bias_gyro,
bias_accel), dimension 15+3N.

The filter object is a value; one instance is single-threaded, distinct
instances may run concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import (
    GroupState,
    _hat_mul_batch,
    _unchecked,
    adjoint,
    compose,
    exp_se2n3,
    inverse,
    log_se2n3,
    project_rotation,
)

__all__ = [
    "FilterState",
    "LinearizedDynamics",
    "ObservationBlock",
    "FilterFaultError",
    "SingularUpdateError",
    "bias_adjoint",
    "predict_covariance",
    "CovariancePredictor",
    "propagate",
    "update",
    "right_invariant_error",
    "check_group_affine",
]

_COND_LIMIT = 1e12


class FilterFaultError(RuntimeError):
    """Numerical fault (non-finite covariance or state) during filtering."""


class SingularUpdateError(FilterFaultError):
    """Innovation covariance too ill-conditioned to invert; update skipped."""


@dataclass(frozen=True)
class FilterState:
    """Group state + IMU bias + error covariance.

    ``bias`` is (gyro_bias, accel_bias) stacked into a 6-vector.  P is
    (15+3N) square and is re-symmetrized on construction; positive
    semidefiniteness is an invariant maintained by the propagation/update
    equations, not enforced here.
    """

    chi: GroupState
    bias: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        bias = np.asarray(self.bias, dtype=float).reshape(6)
        P = np.asarray(self.P, dtype=float)
        d = 15 + 3 * self.chi.n_feet
        if P.shape != (d, d):
            raise ValueError(f"P must be {d}x{d}, got {P.shape}")
        P = 0.5 * (P + P.T)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "P", P)

    @property
    def dim(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class LinearizedDynamics:
    """Continuous error-propagation matrix A, process noise Qc, period T.

    ``discretization`` selects the covariance discretization: "first_order"
    uses A_d = I + A T and Q_d = Qc T; "exact" uses the matrix exponential
    and the van Loan noise integral (slower; used by oracle tests).
    """

    A: np.ndarray
    Qc: np.ndarray
    T: float
    discretization: str = "first_order"

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError("sampling period must be positive")
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")


@dataclass(frozen=True)
class ObservationBlock:
    """One right-invariant observation Y = chi^-1 b + V.

    H is the reduced 3-row measurement matrix for this block, M the noise
    injection matrix and Ncov the 3x3 measurement noise covariance; s is
    the selection matrix reducing the full residual to 3 rows.  For blocks
    built from leg kinematics, H xi == -s (xi^wedge) b by construction.
    """

    Y: np.ndarray
    b: np.ndarray
    H: np.ndarray
    M: np.ndarray
    Ncov: np.ndarray
    s: np.ndarray


def bias_adjoint(chi: GroupState, out=None) -> np.ndarray:
    """Adjoint of chi extended with identity on the six bias rows."""
    n = chi.n_feet
    d = 15 + 3 * n
    if out is None:
        out = np.zeros((d, d))
    else:
        out[:] = 0.0
    R = chi.R
    for i in range(3 + n):
        out[3 * i:3 * i + 3, 3 * i:3 * i + 3] = R
    cross = _hat_mul_batch(np.vstack((chi.v[None, :], chi.p[None, :], chi.feet)), R)
    out[3:6, 0:3] = cross[0]
    out[6:9, 0:3] = cross[1]
    for i in range(n):
        out[9 + 3 * i:12 + 3 * i, 0:3] = cross[2 + i]
    out.flat[(d - 6) * (d + 1)::d + 1] = 1.0
    return out


def _expm(M: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring Taylor matrix exponential (small matrices)."""
    norm = np.abs(M).sum(axis=1).max()
    squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / 0.5))))
    B = M / (2.0 ** squarings)
    out = np.eye(M.shape[0]) + B
    term = B
    for k in range(2, 21):
        term = term @ B / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def _van_loan(A: np.ndarray, Qbar: np.ndarray, T: float):
    """Exact discretization (Phi, Qd) of (A, Qbar) over one step."""
    d = A.shape[0]
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = -A
    M[:d, d:] = Qbar
    M[d:, d:] = A.T
    E = _expm(M * T)
    Phi = E[d:, d:].T
    Qd = Phi @ E[:d, d:]
    return Phi, 0.5 * (Qd + Qd.T)


def _conjugate_noise(Qc: np.ndarray, ad_bar: np.ndarray) -> np.ndarray:
    """ad_bar Qc ad_bar^T; a 1-D Qc is taken as a diagonal."""
    if Qc.ndim == 1:
        return (ad_bar * Qc) @ ad_bar.T
    return ad_bar @ Qc @ ad_bar.T


def predict_covariance(P: np.ndarray, dyn: LinearizedDynamics,
                       ad_bar: np.ndarray) -> np.ndarray:
    """One covariance prediction step; ad_bar conjugates the process noise."""
    Qbar = _conjugate_noise(np.asarray(dyn.Qc), ad_bar)
    if dyn.discretization == "first_order":
        Ad = np.eye(P.shape[0]) + dyn.T * dyn.A
        return Ad @ P @ Ad.T + Qbar * dyn.T
    if dyn.discretization == "exact":
        Phi, Qd = _van_loan(dyn.A, Qbar, dyn.T)
        return Phi @ P @ Phi.T + Qd
    raise ValueError(f"unknown discretization {dyn.discretization!r}")


class CovariancePredictor:
    """Covariance prediction from a fixed snapshot with the propagation term
    cached, so noise-only re-predictions (adaptive scaling, slip rejection)
    do not redo the A P A^T product.  predict(Qc) is bit-identical to
    predict_covariance on the same inputs.
    """

    def __init__(self, P: np.ndarray, A: np.ndarray, T: float,
                 ad_bar: np.ndarray, discretization: str = "first_order"):
        self.T = T
        self.A = A
        self.ad_bar = ad_bar
        self.discretization = discretization
        if discretization == "first_order":
            Ad = T * A
            Ad.flat[::Ad.shape[0] + 1] += 1.0
            self._prop = Ad @ P @ Ad.T
        elif discretization == "exact":
            Phi = _expm(A * T)
            self._prop = Phi @ P @ Phi.T
        else:
            raise ValueError(f"unknown discretization {discretization!r}")

    def predict(self, Qc: np.ndarray) -> np.ndarray:
        Qbar = _conjugate_noise(np.asarray(Qc), self.ad_bar)
        if self.discretization == "first_order":
            return self._prop + Qbar * self.T
        _, Qd = _van_loan(self.A, Qbar, self.T)
        return self._prop + Qd


def propagate(state: FilterState, dyn: LinearizedDynamics, mean_fn) -> FilterState:
    """Propagation step.

    ``mean_fn(chi, bias) -> chi`` is the plant's discretized mean dynamics.
    The covariance is predicted with the noise conjugated by the adjoint at
    the propagated mean (identity on the bias rows).
    """
    chi_minus = mean_fn(state.chi, state.bias)
    ad_bar = bias_adjoint(chi_minus)
    P_minus = predict_covariance(state.P, dyn, ad_bar)
    if not np.isfinite(P_minus.sum()):
        raise FilterFaultError("non-finite covariance after propagation")
    return FilterState(chi_minus, state.bias, P_minus)


def update(state: FilterState, blocks) -> FilterState:
    """Stacked measurement update.

    Residuals are s (chi Y - b) per block; the gain follows the standard
    discrete Kalman equations on the stacked H with block-diagonal
    M N M^T.  The group correction is applied multiplicatively on the
    left, the bias correction additively, and P+ = (I - K H) P- is then
    symmetrized.  Raises SingularUpdateError when the innovation
    covariance has an estimated condition number above 1e12; the caller
    decides whether to skip the tick or abort.
    """
    if not blocks:
        raise ValueError("update requires at least one observation block")
    d = state.dim
    chi = state.chi
    chi_mat = chi.as_matrix()
    H = np.concatenate([blk.H for blk in blocks], axis=0)
    m = H.shape[0]
    z = np.empty(m)
    Rn = np.zeros((m, m))
    last_mn = None
    mnm = None
    for i, blk in enumerate(blocks):
        z[3 * i:3 * i + 3] = blk.s @ (chi_mat @ blk.Y - blk.b)
        key = (id(blk.M), id(blk.Ncov))
        if key != last_mn:
            mnm = blk.M @ blk.Ncov @ blk.M.T
            last_mn = key
        Rn[3 * i:3 * i + 3, 3 * i:3 * i + 3] = mnm

    P = state.P
    HP = H @ P
    S = HP @ H.T + Rn
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularUpdateError("innovation covariance not positive definite") from exc
    piv = np.diag(L)
    cond_est = (piv.max() / piv.min()) ** 2
    if cond_est > _COND_LIMIT:
        raise SingularUpdateError(
            f"innovation covariance ill-conditioned (~{cond_est:.2e})")

    K = np.linalg.solve(S, HP).T
    delta = K @ z
    corr = exp_se2n3(delta[: d - 6])
    Rc = corr.R
    chi_new = _unchecked(
        project_rotation(Rc @ chi.R),
        Rc @ chi.v + corr.v,
        Rc @ chi.p + corr.p,
        chi.feet @ Rc.T + corr.feet,
    )
    bias_new = state.bias + delta[d - 6:]
    P_new = P - K @ HP
    if not np.isfinite(P_new.sum()):
        raise FilterFaultError("non-finite covariance after update")
    return FilterState(chi_new, bias_new, P_new)


def right_invariant_error(est: GroupState, truth: GroupState) -> np.ndarray:
    """Log of the multiplicative error est * truth^-1, as a tangent vector.

    Evaluation/consistency statistic only; not on the filter's runtime path.
    """
    return log_se2n3(compose(est, inverse(truth)))


def _default_input_sampler(rng):
    return rng.normal(size=3) * 2.0, rng.normal(size=3) * 5.0


def check_group_affine(f, n_feet: int = 4, samples: int = 1000, rng=None,
                       input_sampler=None, scale: float = 0.8) -> float:
    """Max residual of the group-affine identity over random (chi1, chi2, u).

    ``f(chi, u)`` must return the plant flow as a dense (5+N)x(5+N) matrix.
    Test utility, not a runtime path.
    """
    rng = np.random.default_rng(rng)
    sampler = input_sampler or _default_input_sampler
    ident = GroupState.identity(n_feet)
    worst = 0.0
    for _ in range(samples):
        chi1 = exp_se2n3(rng.normal(size=9 + 3 * n_feet) * scale)
        chi2 = exp_se2n3(rng.normal(size=9 + 3 * n_feet) * scale)
        u = sampler(rng)
        M1 = chi1.as_matrix()
        M2 = chi2.as_matrix()
        lhs = f(compose(chi1, chi2), u)
        rhs = f(chi1, u) @ M2 + M1 @ f(chi2, u) - M1 @ f(ident, u) @ M2
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst
