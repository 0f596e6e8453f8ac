# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled serial-chain integrator; same algorithm as ``_chain_py``."""
import numpy as np

from libc.math cimport sin, cos, sqrt, fabs, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy

cdef enum:
    REVOLUTE = 0


cdef inline void cross3(const double* a, const double* b, double* out) noexcept nogil:
    cdef double x = a[1] * b[2] - a[2] * b[1]
    cdef double y = a[2] * b[0] - a[0] * b[2]
    cdef double z = a[0] * b[1] - a[1] * b[0]
    out[0] = x
    out[1] = y
    out[2] = z


cdef inline void matvec3(const double* M, const double* v, double* out) noexcept nogil:
    cdef int r
    for r in range(3):
        out[r] = M[3 * r] * v[0] + M[3 * r + 1] * v[1] + M[3 * r + 2] * v[2]


cdef inline void matmul3(const double* A, const double* B, double* out) noexcept nogil:
    cdef int r, c
    for r in range(3):
        for c in range(3):
            out[3 * r + c] = A[3 * r] * B[c] + A[3 * r + 1] * B[3 + c] + A[3 * r + 2] * B[6 + c]


cdef inline void matvec6(const double* M, const double* v, double* out) noexcept nogil:
    cdef int r, c
    cdef double s
    for r in range(6):
        s = 0.0
        for c in range(6):
            s += M[6 * r + c] * v[c]
        out[r] = s


cdef inline double dot6(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4] + a[5] * b[5]


cdef inline void crm(const double* v, const double* m, double* out) noexcept nogil:
    cdef double t1[3]
    cdef double t2[3]
    cross3(&v[3], &m[0], t1)
    cross3(&v[0], &m[3], t2)
    cross3(&v[3], &m[3], &out[3])
    out[0] = t1[0] + t2[0]
    out[1] = t1[1] + t2[1]
    out[2] = t1[2] + t2[2]


cdef inline void crf(const double* v, const double* f, double* out) noexcept nogil:
    cdef double t1[3]
    cdef double t2[3]
    cross3(&v[3], &f[3], t1)
    cross3(&v[0], &f[0], t2)
    cross3(&v[3], &f[0], &out[0])
    out[3] = t1[0] + t2[0]
    out[4] = t1[1] + t2[1]
    out[5] = t1[2] + t2[2]


cdef inline void rodrigues(const double* a, double angle, double* R) noexcept nogil:
    cdef double s = sin(angle)
    cdef double c1 = 1.0 - cos(angle)
    cdef double K[9]
    cdef double K2[9]
    cdef int r
    K[0] = 0.0; K[1] = -a[2]; K[2] = a[1]
    K[3] = a[2]; K[4] = 0.0; K[5] = -a[0]
    K[6] = -a[1]; K[7] = a[0]; K[8] = 0.0
    matmul3(K, K, K2)
    for r in range(9):
        R[r] = s * K[r] + c1 * K2[r]
    R[0] += 1.0
    R[4] += 1.0
    R[8] += 1.0


cdef struct Chain:
    int n
    const long* kind
    const double* axis
    const double* pR
    const double* pp
    const double* cR
    const double* cp
    const double* lo
    const double* hi
    const double* damping
    const double* friction
    const double* base_R
    const double* base_p
    const double* mass
    const double* com
    const double* inertia_com
    const double* gravity
    double vs


cdef struct Work:
    double* R      # (n+1) x 9
    double* p      # (n+1) x 3
    double* S      # n x 6
    double* I6     # (n+1) x 36
    double* f      # (n+1) x 6
    double* M      # n x n
    double* Mf     # n x n, free-joint block
    double* rhs    # n
    double* tau    # n
    double* bias   # n
    double* qdd    # n
    double* qdu    # n
    int* locked    # n
    int* idx       # n


cdef void kinematics(const Chain* ch, const double* q, Work* w) noexcept nogil:
    cdef int i, r
    cdef double Rj[9]
    cdef double Rm[9]
    cdef double Rjm[9]
    cdef double pj[3]
    cdef double pjm[3]
    cdef double a[3]
    cdef double tmp[3]
    memcpy(w.R, ch.base_R, 9 * sizeof(double))
    memcpy(w.p, ch.base_p, 3 * sizeof(double))
    for i in range(ch.n):
        matmul3(&w.R[9 * i], &ch.pR[9 * i], Rj)
        matvec3(&w.R[9 * i], &ch.pp[3 * i], tmp)
        for r in range(3):
            pj[r] = w.p[3 * i + r] + tmp[r]
        matvec3(Rj, &ch.axis[3 * i], a)
        if ch.kind[i] == REVOLUTE:
            rodrigues(&ch.axis[3 * i], q[i], Rm)
            matmul3(Rj, Rm, Rjm)
            for r in range(3):
                pjm[r] = pj[r]
            cross3(pj, a, &w.S[6 * i])
            for r in range(3):
                w.S[6 * i + 3 + r] = a[r]
        else:
            memcpy(Rjm, Rj, 9 * sizeof(double))
            for r in range(3):
                pjm[r] = pj[r] + a[r] * q[i]
                w.S[6 * i + r] = a[r]
                w.S[6 * i + 3 + r] = 0.0
        matmul3(Rjm, &ch.cR[9 * i], &w.R[9 * (i + 1)])
        matvec3(Rjm, &ch.cp[3 * i], tmp)
        for r in range(3):
            w.p[3 * (i + 1) + r] = pjm[r] + tmp[r]


cdef void world_inertias(const Chain* ch, Work* w) noexcept nogil:
    cdef int i, r, c, k
    cdef double m
    cdef double cw[3]
    cdef double tmp[3]
    cdef double Sc[9]
    cdef double A[9]
    cdef double B[9]
    cdef double* I
    cdef const double* R
    for i in range(ch.n + 1):
        m = ch.mass[i]
        R = &w.R[9 * i]
        matvec3(R, &ch.com[3 * i], tmp)
        for r in range(3):
            cw[r] = w.p[3 * i + r] + tmp[r]
        Sc[0] = 0.0; Sc[1] = -cw[2]; Sc[2] = cw[1]
        Sc[3] = cw[2]; Sc[4] = 0.0; Sc[5] = -cw[0]
        Sc[6] = -cw[1]; Sc[7] = cw[0]; Sc[8] = 0.0
        # A = R Ic R^T
        matmul3(R, &ch.inertia_com[9 * i], B)
        for r in range(3):
            for c in range(3):
                A[3 * r + c] = B[3 * r] * R[3 * c] + B[3 * r + 1] * R[3 * c + 1] + B[3 * r + 2] * R[3 * c + 2]
        matmul3(Sc, Sc, B)
        I = &w.I6[36 * i]
        for r in range(3):
            for c in range(3):
                I[6 * r + c] = m if r == c else 0.0
                I[6 * r + 3 + c] = -m * Sc[3 * r + c]
                I[6 * (3 + r) + c] = m * Sc[3 * r + c]
                I[6 * (3 + r) + 3 + c] = A[3 * r + c] - m * B[3 * r + c]


cdef void rnea(const Chain* ch, Work* w, const double* qd, const double* qdd,
               const double* a0, const double* fext, double* tau, double* reaction) noexcept nogil:
    cdef int n = ch.n
    cdef int i, r
    cdef double V[6]
    cdef double Vp[6]
    cdef double A[6]
    cdef double c[6]
    cdef double IV[6]
    cdef double F[6]
    cdef double* S
    matvec6(&w.I6[0], a0, &w.f[0])
    memset(V, 0, 6 * sizeof(double))
    memcpy(A, a0, 6 * sizeof(double))
    for i in range(n):
        S = &w.S[6 * i]
        memcpy(Vp, V, 6 * sizeof(double))
        for r in range(6):
            V[r] = Vp[r] + S[r] * qd[i]
        crm(Vp, S, c)
        for r in range(6):
            A[r] = A[r] + c[r] * qd[i] + S[r] * qdd[i]
        matvec6(&w.I6[36 * (i + 1)], A, &w.f[6 * (i + 1)])
        matvec6(&w.I6[36 * (i + 1)], V, IV)
        crf(V, IV, c)
        for r in range(6):
            w.f[6 * (i + 1) + r] = w.f[6 * (i + 1) + r] + c[r]
    for r in range(6):
        w.f[6 * n + r] = w.f[6 * n + r] - fext[r]
    memset(F, 0, 6 * sizeof(double))
    for i in range(n - 1, -1, -1):
        for r in range(6):
            F[r] = F[r] + w.f[6 * (i + 1) + r]
        tau[i] = dot6(&w.S[6 * i], F)
    for r in range(6):
        reaction[r] = F[r] + w.f[r]


cdef void crba(const Chain* ch, Work* w) noexcept nogil:
    cdef int n = ch.n
    cdef int i, j, k
    cdef double comp[36]
    cdef double F[6]
    memset(comp, 0, 36 * sizeof(double))
    for i in range(n - 1, -1, -1):
        for k in range(36):
            comp[k] = comp[k] + w.I6[36 * (i + 1) + k]
        matvec6(comp, &w.S[6 * i], F)
        w.M[n * i + i] = dot6(&w.S[6 * i], F)
        for j in range(i - 1, -1, -1):
            w.M[n * i + j] = dot6(&w.S[6 * j], F)
            w.M[n * j + i] = w.M[n * i + j]


cdef int solve_spd(double* A, double* b, int m) noexcept nogil:
    """In-place Cholesky solve of the m x m system; returns 0 on success."""
    cdef int i, j, k
    cdef double s
    for j in range(m):
        s = A[m * j + j]
        for k in range(j):
            s -= A[m * j + k] * A[m * j + k]
        if not s > 0.0:
            return 1
        A[m * j + j] = sqrt(s)
        for i in range(j + 1, m):
            s = A[m * i + j]
            for k in range(j):
                s -= A[m * i + k] * A[m * j + k]
            A[m * i + j] = s / A[m * j + j]
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= A[m * i + k] * b[k]
        b[i] = s / A[m * i + i]
    for i in range(m - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, m):
            s -= A[m * k + i] * b[k]
        b[i] = s / A[m * i + i]
    return 0


cdef int step(const Chain* ch, Work* w, const double* q, const double* qd, const double* wb, double dt,
              double* q_next, double* qd_next, double* qdd_eff, double* reaction) noexcept nogil:
    cdef int n = ch.n
    cdef int i, j, nf, any_zeroed
    cdef double a0[6]
    cdef double fext[6]
    cdef double force[3]
    cdef double tmp[3]
    cdef double t, fs, drive
    cdef double* RL = &w.R[9 * n]
    cdef double* pL = &w.p[3 * n]

    kinematics(ch, q, w)
    world_inertias(ch, w)
    matvec3(RL, &wb[0], force)
    cross3(pL, force, &fext[3])
    matvec3(RL, &wb[3], tmp)
    for i in range(3):
        fext[i] = force[i]
        fext[3 + i] = fext[3 + i] + tmp[i]
        a0[i] = -ch.gravity[i]
        a0[3 + i] = 0.0

    for i in range(n):
        w.qdu[i] = qd[i]
        w.qdd[i] = 0.0
    rnea(ch, w, w.qdu, w.qdd, a0, fext, w.bias, reaction)
    any_zeroed = 0
    for i in range(n):
        fs = ch.friction[i]
        w.locked[i] = 1 if (fabs(w.qdu[i]) < ch.vs and fs > 0.0 and fabs(w.bias[i]) <= fs) else 0
        if w.locked[i] and w.qdu[i] != 0.0:
            any_zeroed = 1
    if any_zeroed:
        for i in range(n):
            if w.locked[i]:
                w.qdu[i] = 0.0
        rnea(ch, w, w.qdu, w.qdd, a0, fext, w.bias, reaction)

    for i in range(n):
        fs = ch.friction[i]
        drive = -w.bias[i]
        t = -ch.damping[i] * w.qdu[i]
        if fabs(w.qdu[i]) < ch.vs:
            if drive > 0.0:
                t -= fs
            elif drive < 0.0:
                t += fs
        else:
            if w.qdu[i] > 0.0:
                t -= fs
            else:
                t += fs
        w.tau[i] = t

    nf = 0
    for i in range(n):
        if not w.locked[i]:
            w.idx[nf] = i
            nf += 1
    if nf > 0:
        crba(ch, w)
        for i in range(nf):
            w.rhs[i] = w.tau[w.idx[i]] - w.bias[w.idx[i]]
            for j in range(nf):
                w.Mf[nf * i + j] = w.M[n * w.idx[i] + w.idx[j]]
        if solve_spd(w.Mf, w.rhs, nf) != 0:
            return 1
        for i in range(nf):
            w.qdd[w.idx[i]] = w.rhs[i]

    for i in range(n):
        qd_next[i] = 0.0 if w.locked[i] else w.qdu[i] + dt * w.qdd[i]
        # friction flips sign at zero velocity: stop there instead of overshooting
        if ch.friction[i] > 0.0 and w.qdu[i] * qd_next[i] < 0.0:
            qd_next[i] = 0.0
        q_next[i] = q[i] + dt * qd_next[i]
        if q_next[i] < ch.lo[i]:
            q_next[i] = ch.lo[i]
            qd_next[i] = 0.0
        elif q_next[i] > ch.hi[i]:
            q_next[i] = ch.hi[i]
            qd_next[i] = 0.0
        qdd_eff[i] = (qd_next[i] - qd[i]) / dt
    rnea(ch, w, qd, qdd_eff, a0, fext, w.tau, reaction)
    return 0


def integrate(dict ch, q0, qd0, wrench, double dt):
    """Run ``len(wrench)`` steps; see ``_chain_py.integrate`` for the contract."""
    cdef long[::1] kind = np.ascontiguousarray(ch["kind"], dtype=np.int_)
    cdef double[::1] axis = np.ascontiguousarray(ch["axis"], dtype=float).ravel()
    cdef double[::1] pR = np.ascontiguousarray(ch["pR"], dtype=float).ravel()
    cdef double[::1] pp = np.ascontiguousarray(ch["pp"], dtype=float).ravel()
    cdef double[::1] cR = np.ascontiguousarray(ch["cR"], dtype=float).ravel()
    cdef double[::1] cp = np.ascontiguousarray(ch["cp"], dtype=float).ravel()
    cdef double[::1] lo = np.ascontiguousarray(ch["lo"], dtype=float)
    cdef double[::1] hi = np.ascontiguousarray(ch["hi"], dtype=float)
    cdef double[::1] damping = np.ascontiguousarray(ch["damping"], dtype=float)
    cdef double[::1] friction = np.ascontiguousarray(ch["friction"], dtype=float)
    cdef double[::1] base_R = np.ascontiguousarray(ch["base_R"], dtype=float).ravel()
    cdef double[::1] base_p = np.ascontiguousarray(ch["base_p"], dtype=float)
    cdef double[::1] mass = np.ascontiguousarray(ch["mass"], dtype=float)
    cdef double[::1] com = np.ascontiguousarray(ch["com"], dtype=float).ravel()
    cdef double[::1] inertia_com = np.ascontiguousarray(ch["inertia_com"], dtype=float).ravel()
    cdef double[::1] gravity = np.ascontiguousarray(ch["gravity"], dtype=float)
    cdef double[:, ::1] wr = np.ascontiguousarray(wrench, dtype=float)
    cdef int n = kind.shape[0]
    cdef int nsteps = wr.shape[0]
    cdef int nb = n if n > 0 else 1

    q_out = np.empty((nsteps + 1, n))
    qd_out = np.empty((nsteps + 1, n))
    qdd_out = np.empty((nsteps, n))
    reaction_out = np.empty((nsteps, 6))
    q_out[0] = q0
    qd_out[0] = qd0
    cdef double[:, ::1] qv = q_out
    cdef double[:, ::1] qdv = qd_out
    cdef double[:, ::1] qddv = qdd_out
    cdef double[:, ::1] rv = reaction_out

    # Empty placeholders keep pointer arithmetic valid when n == 0.
    cdef double dummy[1]
    cdef Chain c
    c.n = n
    c.kind = &kind[0] if n > 0 else NULL
    c.axis = &axis[0] if n > 0 else dummy
    c.pR = &pR[0] if n > 0 else dummy
    c.pp = &pp[0] if n > 0 else dummy
    c.cR = &cR[0] if n > 0 else dummy
    c.cp = &cp[0] if n > 0 else dummy
    c.lo = &lo[0] if n > 0 else dummy
    c.hi = &hi[0] if n > 0 else dummy
    c.damping = &damping[0] if n > 0 else dummy
    c.friction = &friction[0] if n > 0 else dummy
    c.base_R = &base_R[0]
    c.base_p = &base_p[0]
    c.mass = &mass[0]
    c.com = &com[0]
    c.inertia_com = &inertia_com[0]
    c.gravity = &gravity[0]
    c.vs = float(ch["stiction_velocity"])

    cdef Work w
    cdef double* block = <double*> malloc(
        ((n + 1) * (9 + 3 + 36 + 6) + 6 * nb + 2 * nb * nb + 5 * nb) * sizeof(double))
    cdef int* iblock = <int*> malloc(2 * nb * sizeof(int))
    if block == NULL or iblock == NULL:
        free(block)
        free(iblock)
        raise MemoryError()
    w.R = block
    w.p = w.R + 9 * (n + 1)
    w.I6 = w.p + 3 * (n + 1)
    w.f = w.I6 + 36 * (n + 1)
    w.S = w.f + 6 * (n + 1)
    w.M = w.S + 6 * nb
    w.Mf = w.M + nb * nb
    w.rhs = w.Mf + nb * nb
    w.tau = w.rhs + nb
    w.bias = w.tau + nb
    w.qdd = w.bias + nb
    w.qdu = w.qdd + nb
    w.locked = iblock
    w.idx = iblock + nb

    cdef int k, i, status = -1
    cdef double* qq
    cdef double* qqd
    cdef double* qq1
    cdef double* qqd1
    cdef double* qdde
    with nogil:
        for k in range(nsteps):
            qq = &qv[k, 0] if n > 0 else dummy
            qqd = &qdv[k, 0] if n > 0 else dummy
            qq1 = &qv[k + 1, 0] if n > 0 else dummy
            qqd1 = &qdv[k + 1, 0] if n > 0 else dummy
            qdde = &qddv[k, 0] if n > 0 else dummy
            if step(&c, &w, qq, qqd, &wr[k, 0], dt, qq1, qqd1, qdde, &rv[k, 0]) != 0:
                status = k
                break
            for i in range(n):
                if not (isfinite(qq1[i]) and isfinite(qqd1[i])):
                    status = k
            for i in range(6):
                if not isfinite(rv[k, i]):
                    status = k
            if status >= 0:
                break
    free(block)
    free(iblock)
    return q_out, qd_out, qdd_out, reaction_out, status
