"""Compiled fixed-step RK4 loop for the nodal ODE system.

State: node voltages ``v`` and VO2 metallicities ``s``. In ideal-switch mode
each device also carries a binary target ``b`` that is updated between steps.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _rhs(t, v, s, b, cap_inv, lap, gs, vdd, t_on, vh, vl, gl, gh, tau, slope,
         ideal, cur, dv, ds):
    n = v.shape[0]
    for k in range(n):
        sk = min(max(s[k], 0.0), 1.0)
        vsup = vdd[k] if t >= t_on[k] else 0.0
        g = gl[k] + (gh[k] - gl[k]) * sk
        acc = gs[k] * (vsup - v[k]) - g * v[k]
        for l in range(n):
            acc += lap[k, l] * v[l]
        cur[k] = acc
        if ideal:
            ds[k] = (b[k] - s[k]) / tau[k] if tau[k] > 0.0 else 0.0
        else:
            th = vh[k] - (vh[k] - vl[k]) * sk
            target = 0.5 * (1.0 + math.tanh(2.0 * slope[k] * (v[k] - th)))
            ds[k] = (target - s[k]) / tau[k]
    for k in range(n):
        acc = 0.0
        for l in range(n):
            acc += cap_inv[k, l] * cur[l]
        dv[k] = acc


@njit(cache=True, nogil=True)
def integrate(cap_inv, lap, gs, vdd, t_on, vh, vl, gl, gh, tau, slope, ideal,
              dt, n_steps, stride, v_out, s_out):
    """Run ``n_steps`` RK4 steps from the all-zero state.

    Writes every ``stride``-th state (starting with step 0) into ``v_out`` and
    ``s_out``. Returns ``(-1, -1)`` on success, otherwise the step index and
    node of the first non-finite value.
    """
    n = gs.shape[0]
    v = np.zeros(n)
    s = np.zeros(n)
    b = np.zeros(n)
    cur = np.empty(n)
    k1v = np.empty(n); k2v = np.empty(n); k3v = np.empty(n); k4v = np.empty(n)
    k1s = np.empty(n); k2s = np.empty(n); k3s = np.empty(n); k4s = np.empty(n)
    vt = np.empty(n)
    st = np.empty(n)
    for k in range(n):
        v_out[0, k] = 0.0
        s_out[0, k] = 0.0
    rec = 1
    for i in range(n_steps):
        t = i * dt
        _rhs(t, v, s, b, cap_inv, lap, gs, vdd, t_on, vh, vl, gl, gh, tau, slope,
             ideal, cur, k1v, k1s)
        for k in range(n):
            vt[k] = v[k] + 0.5 * dt * k1v[k]
            st[k] = s[k] + 0.5 * dt * k1s[k]
        _rhs(t + 0.5 * dt, vt, st, b, cap_inv, lap, gs, vdd, t_on, vh, vl, gl, gh,
             tau, slope, ideal, cur, k2v, k2s)
        for k in range(n):
            vt[k] = v[k] + 0.5 * dt * k2v[k]
            st[k] = s[k] + 0.5 * dt * k2s[k]
        _rhs(t + 0.5 * dt, vt, st, b, cap_inv, lap, gs, vdd, t_on, vh, vl, gl, gh,
             tau, slope, ideal, cur, k3v, k3s)
        for k in range(n):
            vt[k] = v[k] + dt * k3v[k]
            st[k] = s[k] + dt * k3s[k]
        _rhs(t + dt, vt, st, b, cap_inv, lap, gs, vdd, t_on, vh, vl, gl, gh, tau,
             slope, ideal, cur, k4v, k4s)
        for k in range(n):
            v[k] += dt / 6.0 * (k1v[k] + 2.0 * k2v[k] + 2.0 * k3v[k] + k4v[k])
            s[k] += dt / 6.0 * (k1s[k] + 2.0 * k2s[k] + 2.0 * k3s[k] + k4s[k])
            s[k] = min(max(s[k], 0.0), 1.0)
            if not (math.isfinite(v[k]) and math.isfinite(s[k])):
                return i + 1, k
            if ideal:
                if b[k] == 0.0 and v[k] >= vh[k]:
                    b[k] = 1.0
                elif b[k] == 1.0 and v[k] <= vl[k]:
                    b[k] = 0.0
                if tau[k] == 0.0:
                    s[k] = b[k]
        if (i + 1) % stride == 0:
            for k in range(n):
                v_out[rec, k] = v[k]
                s_out[rec, k] = s[k]
            rec += 1
    return -1, -1
