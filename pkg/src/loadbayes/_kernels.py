"""Jitted integration kernels.

All trajectory math lives in `_step_one` / `_inject_one` so that every code
path (full simulation, batch likelihood, particle-filter blocks) performs
bit-identical floating point operations. Per-trajectory constants are packed
in a (B, NPAR) array with the column layout below.
"""

import numpy as np
from numba import njit

# packed parameter columns
RA, XP, X0, TP, TWO_H, TAU_M, OMEG, V1, V2, TD, SGW, PZ, PI, PP, QZ, QI, QP, VZ = range(18)
NPAR = 18


@njit(cache=True, nogil=True)
def _step_one(e_d, e_q, s, f, v, h, sqrt_h, z, use_noise,
              r_a, x_p, x0, t_p, two_h, tau_m, omg,
              v1, v2, td, sgw, qsign, sin_t, cos_t):
    # algebraic stator currents at the current state
    b1 = -e_d - v * sin_t
    b2 = v * cos_t - e_q
    det = r_a * r_a + qsign * x_p * x_p
    i_d = (r_a * b1 + x_p * b2) / det
    i_q = (-qsign * x_p * b1 + r_a * b2) / det
    dx = x0 - x_p
    de_d = -(e_d + dx * i_q) / t_p + s * omg * e_q
    de_q = -(e_q - dx * i_d) / t_p - s * omg * e_d
    ds = (tau_m - e_d * i_d - e_q * i_q) / two_h
    # connected-fraction lag; Wiener increment only inside the ramp region
    if v >= v1:
        d_in = 1.0
    elif v <= v2:
        d_in = 0.0
    else:
        d_in = (v - v2) / (v1 - v2)
    f_new = f + (h / td) * (-f + d_in)
    if use_noise and v2 < v < v1:
        f_new = f_new + sgw * sqrt_h * z
    if f_new < 0.0:
        f_new = 0.0
    elif f_new > 1.0:
        f_new = 1.0
    return e_d + h * de_d, e_q + h * de_q, s + h * ds, f_new


@njit(cache=True, nogil=True)
def _inject_one(e_d, e_q, f, v, r_a, x_p, qsign, sin_t, cos_t,
                pz, pi, pp, qz, qi, qp, vz):
    b1 = -e_d - v * sin_t
    b2 = v * cos_t - e_q
    det = r_a * r_a + qsign * x_p * x_p
    i_d = (r_a * b1 + x_p * b2) / det
    i_q = (-qsign * x_p * b1 + r_a * b2) / det
    p_mot = -v * sin_t * i_d + v * cos_t * i_q
    q_mot = v * cos_t * i_d + v * sin_t * i_q
    vr = v / vz
    p = f * p_mot + (pp + pi * vr + pz * vr * vr)
    q = f * q_mot + (qp + qi * vr + qz * vr * vr)
    return p, q


@njit(cache=True, nogil=True)
def simulate_batch(v_seq, h, cpar, qsign, sin_t, cos_t,
                   ed, eq, sl, fr, noise, use_noise,
                   obs_stride, p_obs, q_obs, full, record_full, bad):
    """Integrate B trajectories over the whole horizon.

    States (ed, eq, sl, fr) are updated in place. Observations are written
    at steps obs_stride, 2*obs_stride, ... into p_obs/q_obs of shape
    (n_obs, B). With record_full, per-step states and injections go into
    full (n_steps+1, B, 6). bad[i] is set to the 1-based step index of the
    first non-finite state (-1 while healthy); integration of that
    trajectory stops there.
    """
    n_steps = v_seq.shape[0] - 1
    B = cpar.shape[0]
    sqrt_h = np.sqrt(h)
    for i in range(B):
        r_a = cpar[i, RA]
        x_p = cpar[i, XP]
        x0 = cpar[i, X0]
        t_p = cpar[i, TP]
        two_h = cpar[i, TWO_H]
        tau_m = cpar[i, TAU_M]
        omg = cpar[i, OMEG]
        v1 = cpar[i, V1]
        v2 = cpar[i, V2]
        td = cpar[i, TD]
        sgw = cpar[i, SGW]
        pz = cpar[i, PZ]
        pi = cpar[i, PI]
        pp = cpar[i, PP]
        qz = cpar[i, QZ]
        qi = cpar[i, QI]
        qp = cpar[i, QP]
        vz = cpar[i, VZ]
        e_d = ed[i]
        e_q = eq[i]
        s = sl[i]
        f = fr[i]
        for k in range(n_steps + 1):
            v = v_seq[k]
            if record_full:
                p, q = _inject_one(e_d, e_q, f, v, r_a, x_p, qsign, sin_t, cos_t,
                                   pz, pi, pp, qz, qi, qp, vz)
                full[k, i, 0] = e_d
                full[k, i, 1] = e_q
                full[k, i, 2] = s
                full[k, i, 3] = f
                full[k, i, 4] = p
                full[k, i, 5] = q
            if k > 0 and k % obs_stride == 0:
                p, q = _inject_one(e_d, e_q, f, v, r_a, x_p, qsign, sin_t, cos_t,
                                   pz, pi, pp, qz, qi, qp, vz)
                ko = k // obs_stride - 1
                p_obs[ko, i] = p
                q_obs[ko, i] = q
            if k == n_steps:
                break
            z = noise[i, k] if use_noise else 0.0
            e_d, e_q, s, f = _step_one(e_d, e_q, s, f, v, h, sqrt_h, z, use_noise,
                                       r_a, x_p, x0, t_p, two_h, tau_m, omg,
                                       v1, v2, td, sgw, qsign, sin_t, cos_t)
            if not (np.isfinite(e_d) and np.isfinite(e_q) and np.isfinite(s)):
                bad[i] = k + 1
                break
        ed[i] = e_d
        eq[i] = e_q
        sl[i] = s
        fr[i] = f


@njit(cache=True, nogil=True)
def advance(v_seq, h, k0, k1, cpar, qsign, sin_t, cos_t,
            ed, eq, sl, fr, noise, use_noise, bad):
    """Integrate steps k0..k1 (exclusive) in place; used for filter blocks."""
    B = cpar.shape[0]
    sqrt_h = np.sqrt(h)
    for i in range(B):
        if bad[i] >= 0:
            continue
        r_a = cpar[i, RA]
        x_p = cpar[i, XP]
        x0 = cpar[i, X0]
        t_p = cpar[i, TP]
        two_h = cpar[i, TWO_H]
        tau_m = cpar[i, TAU_M]
        omg = cpar[i, OMEG]
        v1 = cpar[i, V1]
        v2 = cpar[i, V2]
        td = cpar[i, TD]
        sgw = cpar[i, SGW]
        e_d = ed[i]
        e_q = eq[i]
        s = sl[i]
        f = fr[i]
        for k in range(k0, k1):
            v = v_seq[k]
            z = noise[i, k] if use_noise else 0.0
            e_d, e_q, s, f = _step_one(e_d, e_q, s, f, v, h, sqrt_h, z, use_noise,
                                       r_a, x_p, x0, t_p, two_h, tau_m, omg,
                                       v1, v2, td, sgw, qsign, sin_t, cos_t)
            if not (np.isfinite(e_d) and np.isfinite(e_q) and np.isfinite(s)):
                bad[i] = k + 1
                break
        ed[i] = e_d
        eq[i] = e_q
        sl[i] = s
        fr[i] = f


@njit(cache=True, nogil=True)
def inject_batch(v, cpar, qsign, sin_t, cos_t, ed, eq, fr, p_out, q_out):
    """Injected (P, Q) for every trajectory at a common voltage."""
    B = cpar.shape[0]
    for i in range(B):
        p, q = _inject_one(ed[i], eq[i], fr[i], v,
                           cpar[i, RA], cpar[i, XP], qsign, sin_t, cos_t,
                           cpar[i, PZ], cpar[i, PI], cpar[i, PP],
                           cpar[i, QZ], cpar[i, QI], cpar[i, QP], cpar[i, VZ])
        p_out[i] = p
        q_out[i] = q
