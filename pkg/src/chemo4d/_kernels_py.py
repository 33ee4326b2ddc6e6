"""Pure-Python (numpy/scipy) versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy.linalg import solve_banded


def tridiag_solve(lo, di, up, rhs):
    ab = np.zeros((3, di.shape[0]))
    ab[0, 1:] = up
    ab[1] = di
    ab[2, :-1] = lo
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def advective_flux(u, v, area, inv_h, upwind):
    a = (v[1:] - v[:-1]) * inv_h
    if upwind:
        u_face = np.where(a > 0.0, u[:-1], u[1:])
    else:
        u_face = 0.5 * (u[:-1] + u[1:])
    return area * a * u_face


def cn_propagate(k_off, k_diag, vol, coef, f, nsteps, decay):
    ab = np.zeros((3, k_diag.shape[0]))
    ab[0, 1:] = coef * k_off
    ab[1] = vol + coef * k_diag
    ab[2, :-1] = coef * k_off
    x = np.array(f, dtype=np.float64, copy=True)
    for _ in range(nsteps):
        rhs = (vol - coef * k_diag) * x
        rhs[:-1] -= coef * k_off * x[1:]
        rhs[1:] -= coef * k_off * x[:-1]
        x = solve_banded((1, 1), ab, rhs, check_finite=False) * decay
    return x
