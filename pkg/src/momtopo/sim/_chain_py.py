"""Reference implementation of the serial-chain integrator.

All quantities are world-frame spatial vectors about the inertial origin,
linear components first. The compiled ``_chain`` module implements the same
algorithm step for step; keep the two in sync.

Per step, from state ``(q, qd)`` and body wrench ``w`` on the last link:

1. forward kinematics, world joint subspaces ``s_i`` and link inertias
2. bias forces by recursive Newton-Euler with ``qdd = 0`` and the base
   accelerating at ``-g``
3. stiction / Coulomb friction and damping
4. joint-space inertia by composite rigid bodies, solve for ``qdd``
5. semi-implicit Euler; a frictional joint whose velocity would change sign
   stops at zero, joints at a hard stop lose their velocity
6. anchor reaction from a second Newton-Euler pass using the effective
   acceleration ``(qd_next - qd) / dt``
"""
import math

import numpy as np

REVOLUTE = 0
PRISMATIC = 1


def _rodrigues(axis, angle):
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def _skew(u):
    return np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])


def _crm(v, m):
    return np.concatenate([np.cross(v[3:], m[:3]) + np.cross(v[:3], m[3:]), np.cross(v[3:], m[3:])])


def _crf(v, f):
    return np.concatenate([np.cross(v[3:], f[:3]), np.cross(v[3:], f[3:]) + np.cross(v[:3], f[:3])])


def kinematics(ch, q):
    n = ch["kind"].shape[0]
    R = np.empty((n + 1, 3, 3))
    p = np.empty((n + 1, 3))
    S = np.zeros((n, 6))
    R[0] = ch["base_R"]
    p[0] = ch["base_p"]
    for i in range(n):
        Rj = R[i] @ ch["pR"][i]
        pj = p[i] + R[i] @ ch["pp"][i]
        a = Rj @ ch["axis"][i]
        if ch["kind"][i] == REVOLUTE:
            Rjm = Rj @ _rodrigues(ch["axis"][i], q[i])
            pjm = pj
            S[i, :3] = np.cross(pj, a)
            S[i, 3:] = a
        else:
            Rjm = Rj
            pjm = pj + a * q[i]
            S[i, :3] = a
        R[i + 1] = Rjm @ ch["cR"][i]
        p[i + 1] = pjm + Rjm @ ch["cp"][i]
    return R, p, S


def world_inertias(ch, R, p):
    L = R.shape[0]
    I6 = np.empty((L, 6, 6))
    for i in range(L):
        m = ch["mass"][i]
        c = p[i] + R[i] @ ch["com"][i]
        Sc = _skew(c)
        I6[i, :3, :3] = m * np.eye(3)
        I6[i, :3, 3:] = -m * Sc
        I6[i, 3:, :3] = m * Sc
        I6[i, 3:, 3:] = R[i] @ ch["inertia_com"][i] @ R[i].T - m * Sc @ Sc
    return I6


def rnea(I6, S, qd, qdd, a0, fext):
    """Joint forces and the total wrench the anchor exerts on the object."""
    n = S.shape[0]
    L = n + 1
    f = np.empty((L, 6))
    f[0] = I6[0] @ a0
    V = np.zeros(6)
    A = a0.copy()
    for i in range(n):
        Vp = V
        V = Vp + S[i] * qd[i]
        A = A + _crm(Vp, S[i]) * qd[i] + S[i] * qdd[i]
        f[i + 1] = I6[i + 1] @ A + _crf(V, I6[i + 1] @ V)
    f[L - 1] = f[L - 1] - fext
    tau = np.empty(n)
    F = np.zeros(6)
    for i in range(n - 1, -1, -1):
        F = F + f[i + 1]
        tau[i] = S[i] @ F
    return tau, F + f[0]


def crba(I6, S):
    n = S.shape[0]
    M = np.empty((n, n))
    comp = np.zeros((6, 6))
    for i in range(n - 1, -1, -1):
        comp = comp + I6[i + 1]
        F = comp @ S[i]
        M[i, i] = S[i] @ F
        for j in range(i - 1, -1, -1):
            M[i, j] = M[j, i] = S[j] @ F
    return M


def external_wrench(R, p, w):
    """Body-frame wrench on the last link mapped to the world frame."""
    force = R[-1] @ w[:3]
    return np.concatenate([force, np.cross(p[-1], force) + R[-1] @ w[3:]])


def step(ch, q, qd, w, dt):
    """One integration step; returns ``(q_next, qd_next, qdd_eff, reaction)``."""
    n = q.shape[0]
    R, p, S = kinematics(ch, q)
    I6 = world_inertias(ch, R, p)
    fext = external_wrench(R, p, w)
    a0 = np.concatenate([-ch["gravity"], np.zeros(3)])
    vs = ch["stiction_velocity"]

    qd_use = qd.copy()
    bias, _ = rnea(I6, S, qd_use, np.zeros(n), a0, fext)
    drive = -bias
    locked = np.zeros(n, dtype=bool)
    for i in range(n):
        fs = ch["friction"][i]
        if abs(qd_use[i]) < vs and fs > 0.0 and abs(drive[i]) <= fs:
            locked[i] = True
    if np.any(qd_use[locked] != 0.0):
        qd_use[locked] = 0.0
        bias, _ = rnea(I6, S, qd_use, np.zeros(n), a0, fext)
        drive = -bias

    tau = np.empty(n)
    for i in range(n):
        fs = ch["friction"][i]
        t = -ch["damping"][i] * qd_use[i]
        if abs(qd_use[i]) < vs:
            t -= fs * math.copysign(1.0, drive[i]) if drive[i] != 0.0 else 0.0
        else:
            t -= fs * math.copysign(1.0, qd_use[i])
        tau[i] = t

    qdd = np.zeros(n)
    free = ~locked
    if np.any(free):
        M = crba(I6, S)
        idx = np.flatnonzero(free)
        qdd[idx] = np.linalg.solve(M[np.ix_(idx, idx)], (tau - bias)[idx])

    qd_next = qd_use + dt * qdd
    qd_next[locked] = 0.0
    # friction flips sign at zero velocity: stop there instead of overshooting
    qd_next[(ch["friction"] > 0.0) & (qd_use * qd_next < 0.0)] = 0.0
    q_next = q + dt * qd_next
    for i in range(n):
        if q_next[i] < ch["lo"][i]:
            q_next[i] = ch["lo"][i]
            qd_next[i] = 0.0
        elif q_next[i] > ch["hi"][i]:
            q_next[i] = ch["hi"][i]
            qd_next[i] = 0.0

    qdd_eff = (qd_next - qd) / dt
    _, reaction = rnea(I6, S, qd, qdd_eff, a0, fext)
    return q_next, qd_next, qdd_eff, reaction


def integrate(ch, q0, qd0, wrench, dt):
    """Run ``len(wrench)`` steps.

    Returns ``(q, qd, qdd, reaction, status)`` with ``q``/``qd`` holding
    ``nsteps + 1`` states; ``status`` is -1 on success or the index of the
    first step that produced a non-finite state.
    """
    nsteps = wrench.shape[0]
    n = q0.shape[0]
    q = np.empty((nsteps + 1, n))
    qd = np.empty((nsteps + 1, n))
    qdd = np.empty((nsteps, n))
    reaction = np.empty((nsteps, 6))
    q[0] = q0
    qd[0] = qd0
    for k in range(nsteps):
        try:
            q[k + 1], qd[k + 1], qdd[k], reaction[k] = step(ch, q[k], qd[k], wrench[k], dt)
        except np.linalg.LinAlgError:
            return q, qd, qdd, reaction, k
        if not (np.all(np.isfinite(q[k + 1])) and np.all(np.isfinite(qd[k + 1]))
                and np.all(np.isfinite(reaction[k]))):
            return q, qd, qdd, reaction, k
    return q, qd, qdd, reaction, -1
