# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled version of the hot solver loops (see _ref.py for the contract)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double _FALLBACK_AFTER = 200
cdef double _FALLBACK_DAMPING = 0.1


def mp_fixed_point(x, w, double c, double complex z, double complex w0,
                   double damping, double tol, long max_iter):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], j
    cdef double complex m = w0, s, f, t
    cdef double theta = damping, step, prev_step = 1e300, residual
    cdef long it = 0, k
    for k in range(1, max_iter + 1):
        it = k
        t = 0
        for j in range(n):
            t = t + wv[j] * xv[j] / (xv[j] * m + 1.0)
        f = -1.0 / (z - c * t)
        step = abs(f - m)
        m = (1.0 - theta) * m + theta * f
        if step < tol:
            break
        if step > prev_step and k > _FALLBACK_AFTER:
            theta = _FALLBACK_DAMPING
        prev_step = step
    s = 0
    for j in range(n):
        s = s + wv[j] / (xv[j] * m + 1.0)
    residual = abs(1.0 - c + z * m + c * s) / abs(z)
    return m, residual, it


def pop_chain_solve(double complex z, rho, a, b, x, w, m_init,
                    double damping, double tol, long max_iter):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rv = np.ascontiguousarray(rho, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t L = rv.shape[0], natoms = xv.shape[0], i, j
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] m = np.array(m_init, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] zz = np.zeros(L + 1, dtype=np.complex128)
    cdef bint real_mode = (z.imag == 0.0)
    cdef double half = 1.0 if z.imag >= 0.0 else -1.0
    cdef double theta = damping, step, prev_step = 1e300, residual
    cdef double complex m0, A, B, C, disc, r1, r2, root, new
    cdef bint ok1, ok2
    cdef long it = 0, k
    zz[L] = z
    for k in range(1, max_iter + 1):
        it = k
        for i in range(L, 0, -1):
            zz[i - 1] = -rv[i - 1] / (av[i - 1] * m[i])
        m0 = 0
        for j in range(natoms):
            m0 = m0 + wv[j] / (xv[j] - zz[0])
        step = abs(m0 - m[0])
        m[0] = m0
        for i in range(1, L + 1):
            A = zz[i] - bv[i - 1]
            B = -(rv[i - 1] - 1.0)
            C = (rv[i - 1] * rv[i - 1] / av[i - 1]) * m[i - 1]
            disc = (B * B - 4.0 * A * C) ** 0.5
            r1 = (-B + disc) / (2.0 * A)
            r2 = (-B - disc) / (2.0 * A)
            if real_mode:
                ok1 = (r1.imag == 0.0) and (r1.real > 0.0)
                ok2 = (r2.imag == 0.0) and (r2.real > 0.0)
            else:
                ok1 = half * r1.imag >= -1e-14
                ok2 = half * r2.imag >= -1e-14
            if ok1 and not ok2:
                root = r1
            elif ok2 and not ok1:
                root = r2
            else:
                root = r1 if abs(r1 - m[i]) <= abs(r2 - m[i]) else r2
            new = (1.0 - theta) * m[i] + theta * root
            if abs(new - m[i]) > step:
                step = abs(new - m[i])
            m[i] = new
        if step < tol:
            break
        if step > prev_step and k > _FALLBACK_AFTER:
            theta = _FALLBACK_DAMPING
        prev_step = step
    for i in range(L, 0, -1):
        zz[i - 1] = -rv[i - 1] / (av[i - 1] * m[i])
    m0 = 0
    for j in range(natoms):
        m0 = m0 + wv[j] / (xv[j] - zz[0])
    residual = abs(m0 - m[0])
    cdef double denom, res_i
    for i in range(1, L + 1):
        A = zz[i] - bv[i - 1]
        B = -(rv[i - 1] - 1.0)
        C = (rv[i - 1] * rv[i - 1] / av[i - 1]) * m[i - 1]
        denom = abs(2.0 * A * m[i] + B)
        if denom < 1e-300:
            denom = 1e-300
        res_i = abs(A * m[i] * m[i] + B * m[i] + C) / denom
        if res_i > residual:
            residual = res_i
    return np.asarray(m), residual, it
