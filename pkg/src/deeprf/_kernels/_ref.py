"""Pure-Python reference implementation of the hot solver loops.

Mirrors the compiled module `_speed` exactly; results from the two backends
agree to solver tolerance (see tests/test_kernels.py).
"""

from __future__ import annotations

import numpy as np

_FALLBACK_AFTER = 200
_FALLBACK_DAMPING = 0.1


def mp_fixed_point(x, w, c, z, w0, damping, tol, max_iter):
    """Solve 1 - c + z*m + c*sum_j w_j/(x_j*m + 1) = 0 for complex m.

    Iterates the half-plane-preserving form m <- -1/(z - c*sum_j w_j x_j /
    (1 + x_j m)), whose damped orbit stays Nevanlinna and converges to the
    unique admissible root. Returns (m, residual, iterations).
    """
    x = np.asarray(x, dtype=float)
    wt = np.asarray(w, dtype=float)
    m = complex(w0)
    theta = float(damping)
    prev_step = np.inf
    it = 0
    for it in range(1, int(max_iter) + 1):
        t = np.sum(wt * x / (x * m + 1.0))
        f = -1.0 / (z - c * t)
        step = abs(f - m)
        m = (1.0 - theta) * m + theta * f
        if step < tol:
            break
        if step > prev_step and it > _FALLBACK_AFTER:
            theta = _FALLBACK_DAMPING
        prev_step = step
    s = np.sum(wt / (x * m + 1.0))
    residual = abs(1.0 - c + z * m + c * s) / abs(z)
    return m, float(residual), it


def pop_chain_solve(z, rho, a, b, x, w, m_init, damping, tol, max_iter):
    """Layer-wise population-spectrum recursion at one spectral point.

    Keeps two arrays (z_0..z_L, m_0..m_L) with z_L fixed; the z-array is
    updated top-down via z_{l-1} = -rho_l/(a_l m_l) and each m_l by the
    closed quadratic root with the Nevanlinna branch (Im m >= 0 for Im z > 0,
    positive real root for real z < 0), tie-broken by continuity.

    Returns (m_array[L+1], residual, iterations).
    """
    rho = np.asarray(rho, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    wt = np.asarray(w, dtype=float)
    L = len(rho)
    zz = np.zeros(L + 1, dtype=complex)
    zz[L] = z
    m = np.array(m_init, dtype=complex)
    real_mode = z.imag == 0.0
    half = 1.0 if z.imag >= 0.0 else -1.0
    theta = float(damping)
    prev_step = np.inf
    it = 0
    for it in range(1, int(max_iter) + 1):
        for i in range(L, 0, -1):
            zz[i - 1] = -rho[i - 1] / (a[i - 1] * m[i])
        m0 = np.sum(wt / (x - zz[0]))
        step = abs(m0 - m[0])
        m[0] = m0
        for i in range(1, L + 1):
            A = zz[i] - b[i - 1]
            B = -(rho[i - 1] - 1.0)
            C = (rho[i - 1] ** 2 / a[i - 1]) * m[i - 1]
            disc = np.sqrt(B * B - 4.0 * A * C + 0j)
            r1 = (-B + disc) / (2.0 * A)
            r2 = (-B - disc) / (2.0 * A)
            if real_mode:
                ok1 = r1.imag == 0.0 and r1.real > 0.0
                ok2 = r2.imag == 0.0 and r2.real > 0.0
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
            step = max(step, abs(new - m[i]))
            m[i] = new
        if step < tol:
            break
        if step > prev_step and it > _FALLBACK_AFTER:
            theta = _FALLBACK_DAMPING
        prev_step = step
    # residual: re-evaluate the defining relations at the converged arrays
    for i in range(L, 0, -1):
        zz[i - 1] = -rho[i - 1] / (a[i - 1] * m[i])
    residual = abs(np.sum(wt / (x - zz[0])) - m[0])
    for i in range(1, L + 1):
        A = zz[i] - b[i - 1]
        B = -(rho[i - 1] - 1.0)
        C = (rho[i - 1] ** 2 / a[i - 1]) * m[i - 1]
        # Newton-step magnitude: the quadratic residual in m-units
        residual = max(
            residual,
            abs(A * m[i] ** 2 + B * m[i] + C) / max(abs(2.0 * A * m[i] + B), 1e-300),
        )
    return m, float(residual), it
