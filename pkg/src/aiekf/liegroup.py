"""Matrix Lie group primitives for the filter state manifold.

The state lives on the group of (rotation, velocity, position, N landmark
positions), embedded as (5+N)x(5+N) matrices.  Tangent vectors are ordered
(rot, vel, pos, foot_1 .. foot_N) and have length 9+3N.

Rotations are plain 3x3 numpy arrays mapping body to inertial coordinates.
All values are immutable and all operations are pure functions, so everything
here is safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GroupState",
    "hat_so3",
    "vee_so3",
    "exp_so3",
    "log_so3",
    "left_jacobian_so3",
    "exp_se2n3",
    "log_se2n3",
    "adjoint",
    "compose",
    "inverse",
    "project_rotation",
]

# below this angle the closed forms switch to 4th-order Taylor expansions
_SMALL_ANGLE = 1e-6
_ORTHO_TOL = 1e-9


def hat_so3(w) -> np.ndarray:
    """Skew matrix of w, satisfying hat_so3(w) @ y == np.cross(w, y)."""
    w = np.asarray(w, dtype=float)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def vee_so3(W) -> np.ndarray:
    """Inverse of hat_so3 (takes the skew-symmetric part as given)."""
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def exp_so3(w) -> np.ndarray:
    """Rotation matrix for a rotation vector, Rodrigues form.

    Falls back to a 4th-order Taylor expansion of the trig coefficients
    below ``_SMALL_ANGLE`` to avoid catastrophic cancellation.
    """
    w = np.asarray(w, dtype=float)
    t2 = float(w @ w)
    t = math.sqrt(t2)
    W = hat_so3(w)
    if t < _SMALL_ANGLE:
        a = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
    else:
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
    return np.eye(3) + a * W + b * (W @ W)


def log_so3(R) -> np.ndarray:
    """Principal-branch rotation vector of R (norm <= pi).

    The angle comes from atan2 of the antisymmetric-part norm against the
    trace, which stays conditioned where arccos degenerates; the theta ~ pi
    branch extracts the axis from the symmetric part of R.
    """
    R = np.asarray(R, dtype=float)
    w_as = vee_so3(R - R.T)  # = 2 sin(t) * axis
    sin_t = 0.5 * math.sqrt(float(w_as @ w_as))
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    cos_t = min(1.0, max(-1.0, (tr - 1.0) / 2.0))
    t = math.atan2(sin_t, cos_t)
    if t < 1e-7:
        return 0.5 * w_as * (1.0 + t * t / 6.0)
    if t > math.pi - 1e-6:
        # R = I + sin(t) hat(u) + (1-cos t)(uu^T - I); recover uu^T
        S = 0.5 * (R + R.T)
        B = np.eye(3) + (S - np.eye(3)) / (1.0 - cos_t)
        k = int(np.argmax(np.diag(B)))
        u = B[:, k].copy()
        u /= np.linalg.norm(u)
        sgn = float(w_as @ u)
        if abs(sgn) > 1e-12:
            if sgn < 0.0:
                u = -u
        else:
            # exactly at pi both signs are valid; pick a deterministic one
            j = int(np.argmax(np.abs(u)))
            if u[j] < 0.0:
                u = -u
        return t * u
    return (0.5 * t / sin_t) * w_as


def left_jacobian_so3(w) -> np.ndarray:
    """Left Jacobian of SO(3); maps tangent translations through exp."""
    w = np.asarray(w, dtype=float)
    t2 = float(w @ w)
    t = math.sqrt(t2)
    W = hat_so3(w)
    if t < _SMALL_ANGLE:
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
        c = (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)) / 6.0
    else:
        b = (1.0 - math.cos(t)) / t2
        c = (t - math.sin(t)) / (t2 * t)
    return np.eye(3) + b * W + c * (W @ W)


def project_rotation(R) -> np.ndarray:
    """One Newton iteration toward the polar factor: R (1.5 I - 0.5 R^T R).

    Squares the orthonormality error of a nearly orthonormal matrix; used to
    stop floating-point drift from accumulating over long filter runs.
    """
    return R @ (1.5 * np.eye(3) - 0.5 * (R.T @ R))


def _exp_and_left_jacobian(w):
    """(exp_so3(w), left_jacobian_so3(w)) with the shared terms computed once."""
    t2 = float(w @ w)
    t = math.sqrt(t2)
    W = hat_so3(w)
    W2 = W @ W
    if t < _SMALL_ANGLE:
        a = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
        c = (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)) / 6.0
    else:
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
        c = (t - math.sin(t)) / (t2 * t)
    eye = np.eye(3)
    return eye + a * W + b * W2, eye + b * W + c * W2


def _det3(R) -> float:
    return float(
        R[0, 0] * (R[1, 1] * R[2, 2] - R[1, 2] * R[2, 1])
        - R[0, 1] * (R[1, 0] * R[2, 2] - R[1, 2] * R[2, 0])
        + R[0, 2] * (R[1, 0] * R[2, 1] - R[1, 1] * R[2, 0])
    )


@dataclass(frozen=True)
class GroupState:
    """One group element: rotation R, velocity v, position p, foot positions.

    ``feet`` is an (N, 3) array; N is fixed per robot (4 for a quadruped)
    and never changes over the life of a filter.  Construction checks that
    R is orthonormal with unit determinant to within 1e-9 and that all
    entries are finite.
    """

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray
    feet: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        v = np.asarray(self.v, dtype=float).reshape(3)
        p = np.asarray(self.p, dtype=float).reshape(3)
        feet = np.asarray(self.feet, dtype=float).reshape(-1, 3)
        if R.shape != (3, 3):
            raise ValueError(f"R must be 3x3, got {R.shape}")
        if not math.isfinite(float(R.sum() + v.sum() + p.sum() + feet.sum())):
            raise ValueError("non-finite entries in group state")
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > _ORTHO_TOL or abs(_det3(R) - 1.0) > _ORTHO_TOL:
            raise ValueError(f"R is not a rotation (orthonormality error {err:.3g})")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "feet", feet)

    @property
    def n_feet(self) -> int:
        return self.feet.shape[0]

    @classmethod
    def identity(cls, n_feet: int = 4) -> "GroupState":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), np.zeros((n_feet, 3)))

    def as_matrix(self) -> np.ndarray:
        """Dense (5+N)x(5+N) embedding."""
        n = self.n_feet
        M = np.eye(5 + n)
        M[:3, :3] = self.R
        M[:3, 3] = self.v
        M[:3, 4] = self.p
        if n:
            M[:3, 5:] = self.feet.T
        return M

    @classmethod
    def from_matrix(cls, M) -> "GroupState":
        M = np.asarray(M, dtype=float)
        n = M.shape[0] - 5
        return cls(M[:3, :3], M[:3, 3], M[:3, 4], M[:3, 5:].T.copy())


def _unchecked(R, v, p, feet) -> GroupState:
    """Construct without validation.

    Internal fast path for operations whose results are valid by
    construction (group products, exponentials, projected rotations);
    anything built from external data goes through GroupState().
    """
    st = object.__new__(GroupState)
    object.__setattr__(st, "R", R)
    object.__setattr__(st, "v", v)
    object.__setattr__(st, "p", p)
    object.__setattr__(st, "feet", feet)
    return st


def compose(a: GroupState, b: GroupState) -> GroupState:
    """Group product a * b (block matrix product of the embeddings)."""
    if a.n_feet != b.n_feet:
        raise ValueError("foot-count mismatch")
    return _unchecked(
        a.R @ b.R,
        a.R @ b.v + a.v,
        a.R @ b.p + a.p,
        b.feet @ a.R.T + a.feet,
    )


def inverse(a: GroupState) -> GroupState:
    Rt = a.R.T
    return _unchecked(Rt.copy(), -(Rt @ a.v), -(Rt @ a.p), -(a.feet @ a.R))


def exp_se2n3(xi) -> GroupState:
    """Group exponential of a tangent vector (rot, vel, pos, feet...).

    Closed form: Rodrigues for the rotation block, with the SO(3) left
    Jacobian applied to every translational block.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size < 9 or (xi.size - 9) % 3 != 0:
        raise ValueError(f"tangent vector length must be 9+3N, got {xi.size}")
    R, J = _exp_and_left_jacobian(xi[:3])
    cols = xi[3:].reshape(-1, 3) @ J.T
    return _unchecked(R, cols[0], cols[1], cols[2:])


def log_se2n3(chi: GroupState) -> np.ndarray:
    """Inverse of exp_se2n3 (principal branch)."""
    w = log_so3(chi.R)
    J = left_jacobian_so3(w)
    cols = np.vstack([chi.v, chi.p, chi.feet])
    tangents = np.linalg.solve(J, cols.T).T
    return np.concatenate([w, tangents.reshape(-1)])


_ROT1 = (1, 2, 0)
_ROT2 = (2, 0, 1)


def _hat_mul_batch(X, R):
    """Stack of hat(X[i]) @ R products via the cyclic cross-product form."""
    return (X[:, _ROT1, None] * R[_ROT2, :][None]
            - X[:, _ROT2, None] * R[_ROT1, :][None])


def adjoint(chi: GroupState) -> np.ndarray:
    """Adjoint matrix: (adjoint(chi) @ xi)^wedge == chi @ xi^wedge @ chi^-1.

    Block structure: R on every diagonal block; hat(v) R, hat(p) R and
    hat(r_i) R down the first block column.
    """
    n = chi.n_feet
    d = 9 + 3 * n
    ad = np.zeros((d, d))
    R = chi.R
    for i in range(3 + n):
        ad[3 * i:3 * i + 3, 3 * i:3 * i + 3] = R
    cross = _hat_mul_batch(np.vstack((chi.v[None, :], chi.p[None, :], chi.feet)), R)
    ad[3:6, 0:3] = cross[0]
    ad[6:9, 0:3] = cross[1]
    for i in range(n):
        ad[9 + 3 * i:12 + 3 * i, 0:3] = cross[2 + i]
    return ad
