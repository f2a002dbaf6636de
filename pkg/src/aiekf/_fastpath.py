"""Jitted full-tick kernel for the filter pipeline.

Mirrors the reference tick semantics of FilterPipeline exactly (contact
fusion, strapdown propagation, nominal covariance prediction, adaptive and
slip-rejection re-predictions, stacked kinematic update) on raw arrays, at
a fraction of the interpreter overhead.  The pure-numpy path stays the
behavioural reference; an equivalence test keeps the two in lockstep.

Everything here assumes float64 C-contiguous arrays and N fixed at call
time.  Status codes returned by ``tick``: 0 updated, 1 no update this tick,
2 update skipped (ill-conditioned innovation covariance), 3 diverged.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap

_COND_LIMIT = 1e12
_TRACE_LIMIT = 1e9


@njit(cache=True)
def _hat_mul(x, R, out, sign):
    """out = sign * hat(x) @ R."""
    for j in range(3):
        out[0, j] = sign * (x[1] * R[2, j] - x[2] * R[1, j])
        out[1, j] = sign * (x[2] * R[0, j] - x[0] * R[2, j])
        out[2, j] = sign * (x[0] * R[1, j] - x[1] * R[0, j])


@njit(cache=True)
def _exp_so3(w, out):
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    t = np.sqrt(t2)
    if t < 1e-6:
        a = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    _rodrigues(w, a, b, out)


@njit(cache=True)
def _left_jacobian(w, out):
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    t = np.sqrt(t2)
    if t < 1e-6:
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
        c = (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)) / 6.0
    else:
        b = (1.0 - np.cos(t)) / t2
        c = (t - np.sin(t)) / (t2 * t)
    _rodrigues(w, b, c, out)


@njit(cache=True)
def _rodrigues(w, a, b, out):
    """out = I + a hat(w) + b hat(w)^2."""
    xx = w[0] * w[0]
    yy = w[1] * w[1]
    zz = w[2] * w[2]
    xy = w[0] * w[1]
    xz = w[0] * w[2]
    yz = w[1] * w[2]
    out[0, 0] = 1.0 - b * (yy + zz)
    out[0, 1] = -a * w[2] + b * xy
    out[0, 2] = a * w[1] + b * xz
    out[1, 0] = a * w[2] + b * xy
    out[1, 1] = 1.0 - b * (xx + zz)
    out[1, 2] = -a * w[0] + b * yz
    out[2, 0] = -a * w[1] + b * xz
    out[2, 1] = a * w[0] + b * yz
    out[2, 2] = 1.0 - b * (xx + yy)


@njit(cache=True)
def _chol(S, L):
    """Cholesky with success flag; L lower-triangular."""
    n = S.shape[0]
    for i in range(n):
        for j in range(n):
            L[i, j] = 0.0
    for i in range(n):
        for j in range(i + 1):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return True


@njit(cache=True)
def _chol_solve(L, B, X):
    """Solve (L L^T) X = B for X, B of shape (n, m)."""
    n = L.shape[0]
    m = B.shape[1]
    for c in range(m):
        for i in range(n):
            s = B[i, c]
            for k in range(i):
                s -= L[i, k] * X[k, c]
            X[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = X[i, c]
            for k in range(i + 1, n):
                s -= L[k, i] * X[k, c]
            X[i, c] = s / L[i, i]


@njit(cache=True)
def _piv_cond_ok(L):
    n = L.shape[0]
    lo = L[0, 0]
    hi = L[0, 0]
    for i in range(1, n):
        if L[i, i] < lo:
            lo = L[i, i]
        if L[i, i] > hi:
            hi = L[i, i]
    return (hi / lo) ** 2 <= _COND_LIMIT


@njit(cache=True)
def _fill_a_adbar(R, v, p, feet, gravity, A, adbar):
    d = A.shape[0]
    n = feet.shape[0]
    for i in range(d):
        for j in range(d):
            A[i, j] = 0.0
            adbar[i, j] = 0.0
    # gravity cross block and velocity-to-position identity
    A[3, 1] = -gravity[2]
    A[3, 2] = gravity[1]
    A[4, 0] = gravity[2]
    A[4, 2] = -gravity[0]
    A[5, 0] = -gravity[1]
    A[5, 1] = gravity[0]
    A[6, 3] = 1.0
    A[7, 4] = 1.0
    A[8, 5] = 1.0
    bg = d - 6
    ba = d - 3
    for i in range(3):
        for j in range(3):
            A[i, bg + j] = -R[i, j]
            A[3 + i, ba + j] = -R[i, j]
    tmp = np.empty((3, 3))
    _hat_mul(v, R, tmp, -1.0)
    for i in range(3):
        for j in range(3):
            A[3 + i, bg + j] = tmp[i, j]
    _hat_mul(p, R, tmp, -1.0)
    for i in range(3):
        for j in range(3):
            A[6 + i, bg + j] = tmp[i, j]
    for leg in range(n):
        _hat_mul(feet[leg], R, tmp, -1.0)
        for i in range(3):
            for j in range(3):
                A[9 + 3 * leg + i, bg + j] = tmp[i, j]
    # adjoint with identity on the bias rows
    for blk in range(3 + n):
        for i in range(3):
            for j in range(3):
                adbar[3 * blk + i, 3 * blk + j] = R[i, j]
    _hat_mul(v, R, tmp, 1.0)
    for i in range(3):
        for j in range(3):
            adbar[3 + i, j] = tmp[i, j]
    _hat_mul(p, R, tmp, 1.0)
    for i in range(3):
        for j in range(3):
            adbar[6 + i, j] = tmp[i, j]
    for leg in range(n):
        _hat_mul(feet[leg], R, tmp, 1.0)
        for i in range(3):
            for j in range(3):
                adbar[9 + 3 * leg + i, j] = tmp[i, j]
    for i in range(6):
        adbar[bg + i, bg + i] = 1.0


@njit(cache=True)
def _noise_term(adbar, q, T, out):
    """out = (adbar * q) @ adbar.T * T."""
    d = adbar.shape[0]
    scaled = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            scaled[i, j] = adbar[i, j] * q[j]
    prod = np.dot(scaled, adbar.T)
    for i in range(d):
        for j in range(d):
            out[i, j] = prod[i, j] * T


@njit(cache=True)
def _build_q(flags, rejected, alpha, use_alpha, q_gyro, q_accel, q_bg, q_ba,
             foot_var, swing_var, q):
    d = q.shape[0]
    n = flags.shape[0]
    for i in range(3):
        q[i] = q_gyro
        q[3 + i] = q_accel
        q[6 + i] = 0.0
        q[d - 6 + i] = q_bg
        q[d - 3 + i] = q_ba
    for leg in range(n):
        for i in range(3):
            if flags[leg] and not rejected[leg]:
                if use_alpha:
                    q[9 + 3 * leg + i] = alpha[leg, i] * foot_var[i]
                else:
                    q[9 + 3 * leg + i] = foot_var[i]
            else:
                q[9 + 3 * leg + i] = swing_var


@njit(cache=True)
def tick(R, v, p, feet, bias, P,
         t, gyro, accel, rel_pos, rel_vel, force,
         det_force, det_prob, det_var, det_flag, prev_flags,
         truth_mode, truth_flags,
         win_buf, win_idx, win_count,
         use_fe, use_sr, collect,
         gravity, T,
         q_gyro, q_accel, q_bg, q_ba,
         foot_var, swing_var, qv_var,
         kin_var, alpha_max, slip_sigma,
         gait_period, gait_duty, gait_offsets,
         lpf_gain, f_center, f_scale, pull, proc_var, meas_var, on_th, off_th,
         out_alpha, out_d, out_rejected, out_prob, out_flag,
         out_innov, out_pvv):
    n = feet.shape[0]
    d = P.shape[0]
    m_win = win_buf.shape[1]

    # ---- contacts -----------------------------------------------------
    if truth_mode:
        for leg in range(n):
            out_flag[leg] = truth_flags[leg]
            out_prob[leg] = 1.0 if truth_flags[leg] else 0.0
    else:
        for leg in range(n):
            det_force[leg] += lpf_gain * (force[leg] - det_force[leg])
            f = det_force[leg]
            if f < 0.0:
                f = 0.0
            z = 1.0 / (1.0 + np.exp(-(f - f_center) / f_scale))
            ph = (t / gait_period - gait_offsets[leg]) % 1.0
            prior = 1.0 if (gait_duty >= 1.0 or ph < gait_duty) else 0.0
            x = det_prob[leg] + pull * (prior - det_prob[leg])
            var = (1.0 - pull) ** 2 * det_var[leg] + proc_var
            gain = var / (var + meas_var)
            x = x + gain * (z - x)
            if x < 0.0:
                x = 0.0
            elif x > 1.0:
                x = 1.0
            var = (1.0 - gain) * var
            if var < 1e-9:
                var = 1e-9
            det_prob[leg] = x
            det_var[leg] = var
            det_flag[leg] = (x >= on_th) or (det_flag[leg] and x > off_th)
            out_flag[leg] = det_flag[leg]
            out_prob[leg] = x
    # window resets on swing -> contact
    for leg in range(n):
        if out_flag[leg] and not prev_flags[leg]:
            for i in range(m_win):
                for j in range(3):
                    win_buf[leg, i, j] = 0.0
            win_idx[leg] = 0
            win_count[leg] = 0
        prev_flags[leg] = out_flag[leg]

    # ---- strapdown mean propagation -----------------------------------
    w = np.empty(3)
    a = np.empty(3)
    for i in range(3):
        w[i] = gyro[i] - bias[i]
        a[i] = accel[i] - bias[3 + i]
    acc = np.dot(R, a)
    for i in range(3):
        acc[i] += gravity[i]
    dR = np.empty((3, 3))
    _exp_so3(w * T, dR)
    R_new = np.dot(R, dR)
    for i in range(3):
        for j in range(3):
            R[i, j] = R_new[i, j]
    for i in range(3):
        p[i] += v[i] * T + 0.5 * T * T * acc[i]
        v[i] += acc[i] * T
    # feet unchanged

    # ---- covariance prediction ----------------------------------------
    A = np.empty((d, d))
    adbar = np.empty((d, d))
    _fill_a_adbar(R, v, p, feet, gravity, A, adbar)
    Ad = A * T
    for i in range(d):
        Ad[i, i] += 1.0
    prop = np.dot(Ad, np.dot(P, Ad.T))
    q = np.empty(d)
    rejected0 = np.zeros(n, dtype=np.bool_)
    alpha1 = np.ones((n, 3))
    _build_q(out_flag, rejected0, alpha1, False, q_gyro, q_accel, q_bg, q_ba,
             foot_var, swing_var, q)
    noise = np.empty((d, d))
    _noise_term(adbar, q, T, noise)
    P1 = prop + noise

    for i in range(3):
        for j in range(3):
            out_pvv[i, j] = P1[3 + i, 3 + j]

    # ---- innovations, adaptive scaling, slip gate ----------------------
    for leg in range(n):
        out_d[leg] = 0.0
        out_rejected[leg] = False
        for i in range(3):
            out_alpha[leg, i] = 1.0
            out_innov[leg, i] = 0.0

    any_contact = False
    for leg in range(n):
        if out_flag[leg]:
            any_contact = True
    fe_active = False
    if any_contact and (use_fe or use_sr or collect):
        e = np.empty((n, 3))
        for leg in range(n):
            if not out_flag[leg]:
                continue
            # body-frame static-foot velocity residual, rotated to inertial
            bx = (w[1] * rel_pos[leg, 2] - w[2] * rel_pos[leg, 1]
                  + rel_vel[leg, 0])
            by = (w[2] * rel_pos[leg, 0] - w[0] * rel_pos[leg, 2]
                  + rel_vel[leg, 1])
            bz = (w[0] * rel_pos[leg, 1] - w[1] * rel_pos[leg, 0]
                  + rel_vel[leg, 2])
            for i in range(3):
                e[leg, i] = (-(R[i, 0] * bx + R[i, 1] * by + R[i, 2] * bz)
                             - v[i])
                out_innov[leg, i] = e[leg, i]
        if use_fe:
            for leg in range(n):
                if not out_flag[leg]:
                    continue
                for i in range(3):
                    win_buf[leg, win_idx[leg], i] = e[leg, i]
                win_idx[leg] = (win_idx[leg] + 1) % m_win
                if win_count[leg] < m_win:
                    win_count[leg] += 1
                # alpha from covariance matching on the windowed average
                for jax in range(3):
                    quf = 0.0
                    for ai in range(3):
                        for bi in range(3):
                            u_ab = 0.0
                            for s in range(m_win):
                                u_ab += win_buf[leg, s, ai] * win_buf[leg, s, bi]
                            u_ab = u_ab / m_win - P1[3 + ai, 3 + bi]
                            quf += R[ai, jax] * u_ab * R[bi, jax]
                    quf -= qv_var[jax]
                    aj = quf / foot_var[jax]
                    if aj < 1.0:
                        aj = 1.0
                    elif aj > alpha_max:
                        aj = alpha_max
                    out_alpha[leg, jax] = aj
                    if aj > 1.0:
                        fe_active = True
        if use_sr:
            S3 = np.empty((3, 3))
            for i in range(3):
                for j in range(3):
                    s = P1[3 + i, 3 + j]
                    for k in range(3):
                        s += R[i, k] * qv_var[k] * R[j, k]
                    S3[i, j] = s
            L3 = np.empty((3, 3))
            ok = _chol(S3, L3)
            if ok and not _piv_cond_ok(L3):
                ok = False
            for leg in range(n):
                if not out_flag[leg]:
                    continue
                if not ok:
                    out_d[leg] = np.inf
                    out_rejected[leg] = True
                    continue
                y0 = e[leg, 0] / L3[0, 0]
                y1 = (e[leg, 1] - L3[1, 0] * y0) / L3[1, 1]
                y2 = (e[leg, 2] - L3[2, 0] * y0 - L3[2, 1] * y1) / L3[2, 2]
                dist = y0 * y0 + y1 * y1 + y2 * y2
                out_d[leg] = dist
                out_rejected[leg] = dist > slip_sigma

    # ---- re-predictions -------------------------------------------------
    if use_fe and fe_active:
        _build_q(out_flag, rejected0, out_alpha, True, q_gyro, q_accel,
                 q_bg, q_ba, foot_var, swing_var, q)
        _noise_term(adbar, q, T, noise)
        P1 = prop + noise
    any_rej = False
    for leg in range(n):
        if out_rejected[leg] and out_flag[leg]:
            any_rej = True
    if use_sr and any_rej:
        _build_q(out_flag, out_rejected, out_alpha, use_fe, q_gyro, q_accel,
                 q_bg, q_ba, foot_var, swing_var, q)
        _noise_term(adbar, q, T, noise)
        P1 = prop + noise

    # the reference path re-symmetrizes the prior before updating
    for i in range(d):
        for j in range(i + 1, d):
            val = 0.5 * (P1[i, j] + P1[j, i])
            P1[i, j] = val
            P1[j, i] = val

    # ---- stacked kinematic position update ------------------------------
    upd = np.empty(n, dtype=np.int64)
    k = 0
    for leg in range(n):
        if out_flag[leg] and not out_rejected[leg]:
            upd[k] = leg
            k += 1
    status = 1
    if k > 0:
        mrows = 3 * k
        z = np.empty(mrows)
        HP = np.empty((mrows, d))
        for bi in range(k):
            leg = upd[bi]
            for i in range(3):
                z[3 * bi + i] = (R[i, 0] * rel_pos[leg, 0]
                                 + R[i, 1] * rel_pos[leg, 1]
                                 + R[i, 2] * rel_pos[leg, 2]
                                 + p[i] - feet[leg, i])
                fr = 9 + 3 * leg + i
                for c in range(d):
                    HP[3 * bi + i, c] = P1[fr, c] - P1[6 + i, c]
        S = np.empty((mrows, mrows))
        for bi in range(k):
            for i in range(3):
                row = 3 * bi + i
                for bj in range(k):
                    legj = upd[bj]
                    for j in range(3):
                        S[row, 3 * bj + j] = (HP[row, 9 + 3 * legj + j]
                                              - HP[row, 6 + j])
        # measurement noise R (kin_var I) R^T added blockwise
        RRT = np.dot(R, R.T)
        for bi in range(k):
            for i in range(3):
                for j in range(3):
                    S[3 * bi + i, 3 * bi + j] += kin_var * RRT[i, j]
        L = np.empty((mrows, mrows))
        if not _chol(S, L) or not _piv_cond_ok(L):
            status = 2
        else:
            X = np.empty((mrows, d))
            _chol_solve(L, HP, X)
            # delta = K z = X^T z
            delta = np.empty(d)
            for c in range(d):
                s = 0.0
                for r in range(mrows):
                    s += X[r, c] * z[r]
                delta[c] = s
            # group correction exp(xi), bias additive
            Rc = np.empty((3, 3))
            J = np.empty((3, 3))
            _exp_so3(delta[0:3], Rc)
            _left_jacobian(delta[0:3], J)
            vc = np.dot(J, delta[3:6])
            pc = np.dot(J, delta[6:9])
            R_up = np.dot(Rc, R)
            # one Newton iteration toward the polar factor
            G = np.dot(R_up.T, R_up)
            for i in range(3):
                for j in range(3):
                    G[i, j] = -0.5 * G[i, j]
                G[i, i] += 1.5
            R_proj = np.dot(R_up, G)
            v_new = np.dot(Rc, v) + vc
            p_new = np.dot(Rc, p) + pc
            for i in range(3):
                for j in range(3):
                    R[i, j] = R_proj[i, j]
            for i in range(3):
                v[i] = v_new[i]
                p[i] = p_new[i]
            for leg in range(n):
                fc = np.dot(J, delta[9 + 3 * leg:12 + 3 * leg])
                f_new = np.dot(Rc, feet[leg]) + fc
                for i in range(3):
                    feet[leg, i] = f_new[i]
            for i in range(6):
                bias[i] += delta[d - 6 + i]
            # P = P1 - K HP = P1 - X^T HP
            KHP = np.dot(X.T, HP)
            P1 = P1 - KHP
            status = 0

    # symmetrize and store
    for i in range(d):
        for j in range(i, d):
            val = 0.5 * (P1[i, j] + P1[j, i])
            P[i, j] = val
            P[j, i] = val

    # divergence check
    tr = 0.0
    for i in range(d):
        tr += P[i, i]
    ssum = tr
    for i in range(3):
        ssum += v[i] + p[i] + bias[i] + bias[3 + i]
        for j in range(3):
            ssum += R[i, j]
    for leg in range(n):
        for i in range(3):
            ssum += feet[leg, i]
    if not np.isfinite(ssum) or tr > _TRACE_LIMIT:
        return 3
    return status
