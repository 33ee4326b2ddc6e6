# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: tridiagonal solves, face fluxes, Crank-Nicolson sweeps.

Every function here has a twin with the same signature in ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _thomas(const double[::1] lo, const double[::1] di, const double[::1] up,
                  const double[::1] rhs, double[::1] x, double[::1] cp) noexcept nogil:
    cdef Py_ssize_t n = di.shape[0]
    cdef Py_ssize_t i
    cdef double m
    cp[0] = up[0] / di[0]
    x[0] = rhs[0] / di[0]
    for i in range(1, n - 1):
        m = di[i] - lo[i - 1] * cp[i - 1]
        cp[i] = up[i] / m
        x[i] = (rhs[i] - lo[i - 1] * x[i - 1]) / m
    i = n - 1
    m = di[i] - lo[i - 1] * cp[i - 1]
    x[i] = (rhs[i] - lo[i - 1] * x[i - 1]) / m
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - cp[i] * x[i + 1]


def tridiag_solve(const double[::1] lo, const double[::1] di, const double[::1] up,
                  const double[::1] rhs):
    """Solve a tridiagonal system by the Thomas algorithm (no pivoting)."""
    cdef Py_ssize_t n = di.shape[0]
    out = np.empty(n)
    cp = np.empty(n)
    cdef double[::1] x = out
    cdef double[::1] c = cp
    with nogil:
        _thomas(lo, di, up, rhs, x, c)
    return out


def advective_flux(const double[::1] u, const double[::1] v, const double[::1] area,
                   double inv_h, bint upwind):
    """Face fluxes A * dv/dr * u_face; upwind or centered face value of u."""
    cdef Py_ssize_t nf = area.shape[0]
    cdef Py_ssize_t i
    cdef double a
    out = np.empty(nf)
    cdef double[::1] g = out
    with nogil:
        for i in range(nf):
            a = (v[i + 1] - v[i]) * inv_h
            if upwind:
                if a > 0.0:
                    g[i] = area[i] * a * u[i]
                else:
                    g[i] = area[i] * a * u[i + 1]
            else:
                g[i] = area[i] * a * 0.5 * (u[i] + u[i + 1])
    return out


def cn_propagate(const double[::1] k_off, const double[::1] k_diag, const double[::1] vol,
                 double coef, const double[::1] f, int nsteps, double decay):
    """Apply ``nsteps`` Crank-Nicolson steps (V + c K) y = (V - c K) x, times ``decay``.

    ``k_off`` is the (symmetric) off-diagonal of the stiffness matrix K.
    """
    cdef Py_ssize_t n = k_diag.shape[0]
    cdef Py_ssize_t i
    cdef int s
    lo_a = np.empty(n - 1)
    di_a = np.empty(n)
    rhs_a = np.empty(n)
    cp_a = np.empty(n)
    out = np.array(f, dtype=np.float64, copy=True)
    cdef double[::1] lo = lo_a
    cdef double[::1] di = di_a
    cdef double[::1] rhs = rhs_a
    cdef double[::1] cp = cp_a
    cdef double[::1] x = out
    with nogil:
        for i in range(n - 1):
            lo[i] = coef * k_off[i]
        for i in range(n):
            di[i] = vol[i] + coef * k_diag[i]
        for s in range(nsteps):
            rhs[0] = (vol[0] - coef * k_diag[0]) * x[0] - coef * k_off[0] * x[1]
            for i in range(1, n - 1):
                rhs[i] = ((vol[i] - coef * k_diag[i]) * x[i]
                          - coef * (k_off[i - 1] * x[i - 1] + k_off[i] * x[i + 1]))
            i = n - 1
            rhs[i] = (vol[i] - coef * k_diag[i]) * x[i] - coef * k_off[i - 1] * x[i - 1]
            _thomas(lo, di, lo, rhs, x, cp)
            for i in range(n):
                x[i] = x[i] * decay
    return out
