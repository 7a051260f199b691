"""Compiled whole-episode kernels for the bundled environments.

The reference implementations live in `dynamics`, `policy`, and `envs`;
the kernels here inline the same arithmetic (solver sub-steps, affine
encode/decode, environment physics) over a full episode so training runs
at desk scale on a single core.  Tests pin their equivalence against the
reference path.

All stochastic choices (initial states) are made by the caller and passed
in as plain numbers, so every kernel is a deterministic function of its
arguments.  Kernels release the GIL, allowing thread-parallel rollouts.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

REST_MV = -70.0
SPAN_MV = 50.0
MIDPOINT_MV = -40.0


@njit(cache=True, nogil=True, inline="always")
def _clip01(u):
    return 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)


@njit(cache=True, nogil=True)
def _clamp_sensory(v, obs, sv_obs, sv_lo, sv_hi, sv_pos, sv_neg):
    for k in range(sv_obs.shape[0]):
        x = obs[sv_obs[k]]
        if sv_pos[k] >= 0:
            u = 0.0
            if x >= 0.0 and sv_hi[k] > 0.0:
                u = _clip01(x / sv_hi[k])
            v[sv_pos[k]] = REST_MV + SPAN_MV * u
        if sv_neg[k] >= 0:
            u = 0.0
            if x < 0.0 and sv_lo[k] < 0.0:
                u = _clip01(x / sv_lo[k])
            v[sv_neg[k]] = REST_MV + SPAN_MV * u


@njit(cache=True, nogil=True)
def _advance(v, num, den, cm, gleak, eleak, is_sensory, chem_pre, chem_post,
             chem_w, chem_sig, chem_rev, gap_pre, gap_post, gap_w, dt):
    n = v.shape[0]
    for i in range(n):
        cdt = cm[i] / dt
        num[i] = v[i] * cdt + gleak[i] * eleak[i]
        den[i] = cdt + gleak[i]
    for e in range(chem_pre.shape[0]):
        gate = 1.0 / (1.0 + math.exp(-chem_sig[e] * (v[chem_pre[e]] - MIDPOINT_MV)))
        cond = chem_w[e] * gate
        num[chem_post[e]] += cond * chem_rev[e]
        den[chem_post[e]] += cond
    for e in range(gap_pre.shape[0]):
        w = gap_w[e]
        num[gap_post[e]] += w * v[gap_pre[e]]
        den[gap_post[e]] += w
        num[gap_pre[e]] += w * v[gap_post[e]]
        den[gap_pre[e]] += w
    for i in range(n):
        if not is_sensory[i]:
            v[i] = num[i] / den[i]


@njit(cache=True, nogil=True)
def _decode_motor(v, mv_pos, mv_neg, mv_lo, mv_hi, act):
    for a in range(mv_pos.shape[0]):
        y = 0.0
        if mv_pos[a] >= 0:
            y += mv_hi[a] * _clip01((v[mv_pos[a]] - REST_MV) / SPAN_MV)
        if mv_neg[a] >= 0:
            y += mv_lo[a] * _clip01((v[mv_neg[a]] - REST_MV) / SPAN_MV)
        act[a] = min(max(y, mv_lo[a]), mv_hi[a])


@njit(cache=True, nogil=True)
def mountaincar_episode(v, cm, gleak, eleak, is_sensory,
                        chem_pre, chem_post, chem_w, chem_sig, chem_rev,
                        gap_pre, gap_post, gap_w,
                        sv_obs, sv_lo, sv_hi, sv_pos, sv_neg,
                        mv_pos, mv_neg, mv_lo, mv_hi,
                        dt_ode, substeps, pos0, vel0, max_steps,
                        record, pot_out, obs_out, act_out, rew_out):
    n = v.shape[0]
    num = np.empty(n)
    den = np.empty(n)
    obs = np.empty(2)
    act = np.empty(1)
    pos = pos0
    vel = vel0
    total = 0.0
    steps = 0
    for t in range(max_steps):
        obs[0] = pos
        obs[1] = vel
        _clamp_sensory(v, obs, sv_obs, sv_lo, sv_hi, sv_pos, sv_neg)
        for _ in range(substeps):
            _advance(v, num, den, cm, gleak, eleak, is_sensory,
                     chem_pre, chem_post, chem_w, chem_sig, chem_rev,
                     gap_pre, gap_post, gap_w, dt_ode)
        _decode_motor(v, mv_pos, mv_neg, mv_lo, mv_hi, act)
        force = min(max(act[0], -1.0), 1.0)
        vel += force * 0.0015 - 0.0025 * math.cos(3.0 * pos)
        vel = min(max(vel, -0.07), 0.07)
        pos += vel
        if pos < -1.2:
            pos = -1.2
            if vel < 0.0:
                vel = 0.0
        elif pos > 0.6:
            pos = 0.6
        reward = -0.1 * force * force
        done = False
        if pos >= 0.45:
            reward += 100.0
            done = True
        total += reward
        if record:
            for i in range(n):
                pot_out[t, i] = v[i]
            obs_out[t, 0] = obs[0]
            obs_out[t, 1] = obs[1]
            act_out[t, 0] = act[0]
            rew_out[t] = reward
        steps = t + 1
        if done:
            break
    return total, steps


@njit(cache=True, nogil=True)
def pendulum_episode(v, cm, gleak, eleak, is_sensory,
                     chem_pre, chem_post, chem_w, chem_sig, chem_rev,
                     gap_pre, gap_post, gap_w,
                     sv_obs, sv_lo, sv_hi, sv_pos, sv_neg,
                     mv_pos, mv_neg, mv_lo, mv_hi,
                     dt_ode, substeps, x0, xd0, phi0, phid0, max_steps,
                     record, pot_out, obs_out, act_out, rew_out):
    n = v.shape[0]
    num = np.empty(n)
    den = np.empty(n)
    obs = np.empty(4)
    act = np.empty(1)
    x = x0
    xd = xd0
    phi = phi0
    phid = phid0
    total = 0.0
    steps = 0
    total_mass = 1.0 + 0.1
    pml = 0.1 * 0.5
    for t in range(max_steps):
        obs[0] = x
        obs[1] = xd
        obs[2] = phi
        obs[3] = phid
        _clamp_sensory(v, obs, sv_obs, sv_lo, sv_hi, sv_pos, sv_neg)
        for _ in range(substeps):
            _advance(v, num, den, cm, gleak, eleak, is_sensory,
                     chem_pre, chem_post, chem_w, chem_sig, chem_rev,
                     gap_pre, gap_post, gap_w, dt_ode)
        _decode_motor(v, mv_pos, mv_neg, mv_lo, mv_hi, act)
        force = min(max(act[0], -10.0), 10.0)
        sin_phi = math.sin(phi)
        cos_phi = math.cos(phi)
        temp = (force + pml * phid * phid * sin_phi) / total_mass
        phi_acc = (9.8 * sin_phi - cos_phi * temp) / (
            0.5 * (4.0 / 3.0 - 0.1 * cos_phi * cos_phi / total_mass))
        x_acc = temp - pml * phi_acc * cos_phi / total_mass
        xd += x_acc * 0.02
        x += xd * 0.02
        phid += phi_acc * 0.02
        phi += phid * 0.02
        upright = abs(phi) < 0.2 and abs(x) < 1.0
        reward = 1.0 if upright else 0.0
        done = (not upright) or (t + 1 >= max_steps)
        total += reward
        if record:
            for i in range(n):
                pot_out[t, i] = v[i]
            obs_out[t, 0] = obs[0]
            obs_out[t, 1] = obs[1]
            obs_out[t, 2] = obs[2]
            obs_out[t, 3] = obs[3]
            act_out[t, 0] = act[0]
            rew_out[t] = reward
        steps = t + 1
        if done:
            break
    return total, steps


@njit(cache=True, nogil=True)
def parking_episode(v, cm, gleak, eleak, is_sensory,
                    chem_pre, chem_post, chem_w, chem_sig, chem_rev,
                    gap_pre, gap_post, gap_w,
                    sv_obs, sv_lo, sv_hi, sv_pos, sv_neg,
                    mv_pos, mv_neg, mv_lo, mv_hi,
                    dt_ode, substeps, x0, y0, th0, env_dt,
                    cp_x, cp_y, cp_deadline, max_steps,
                    record, pot_out, obs_out, act_out, rew_out):
    n = v.shape[0]
    num = np.empty(n)
    den = np.empty(n)
    obs = np.empty(4)
    act = np.empty(2)
    x = x0
    y = y0
    th = th0
    total = 0.0
    steps = 0
    for t in range(max_steps):
        obs[0] = 1.0
        obs[1] = x
        obs[2] = y
        obs[3] = th
        _clamp_sensory(v, obs, sv_obs, sv_lo, sv_hi, sv_pos, sv_neg)
        for _ in range(substeps):
            _advance(v, num, den, cm, gleak, eleak, is_sensory,
                     chem_pre, chem_post, chem_w, chem_sig, chem_rev,
                     gap_pre, gap_post, gap_w, dt_ode)
        _decode_motor(v, mv_pos, mv_neg, mv_lo, mv_hi, act)
        vlin = min(max(act[0], 0.0), 0.5)
        w = min(max(act[1], -1.0), 1.0)
        x += vlin * math.cos(th) * env_dt
        y += vlin * math.sin(th) * env_dt
        th += w * env_dt
        reward = 0.0
        for c in range(cp_deadline.shape[0]):
            if cp_deadline[c] == t + 1:
                reward = -math.hypot(x - cp_x[c], y - cp_y[c])
        total += reward
        if record:
            for i in range(n):
                pot_out[t, i] = v[i]
            obs_out[t, 0] = obs[0]
            obs_out[t, 1] = obs[1]
            obs_out[t, 2] = obs[2]
            obs_out[t, 3] = obs[3]
            act_out[t, 0] = act[0]
            act_out[t, 1] = act[1]
            rew_out[t] = reward
        steps = t + 1
    return total, steps
