"""Discrete radial operators on R^4 and their inverses.

All operators are finite-volume forms on the grid's control volumes V (the
quadrature weights) and face areas A. The stiffness matrix K satisfies
``(K f)_i = -(F_{i+1/2} - F_{i-1/2})`` with face fluxes ``F = A df/dr``, so that
``Lap f = -K f / V`` and K is symmetric: the Laplacian is self-adjoint in the
weighted inner product and conserves sum(V f) exactly under zero flux at R.
"""
from __future__ import annotations

import math

import numpy as np

from ._backend import kernels
from .core import SPHERE_AREA, Field, Params, RadialGrid, integrate


def face_gradient(grid: RadialGrid, values) -> np.ndarray:
    """df/dr at the n-1 cell faces."""
    values = np.asarray(values)
    return (values[1:] - values[:-1]) / grid.h


def node_gradient(grid: RadialGrid, values) -> np.ndarray:
    """df/dr at the nodes: centered inside, 0 at the origin, one-sided at R."""
    f = np.asarray(values)
    h = grid.h
    g = np.empty_like(f)
    g[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    g[0] = 0.0
    g[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return g


def face_integral(grid: RadialGrid, face_values) -> float:
    """Integral over R^4 of a quantity sampled at faces (dual-cell quadrature)."""
    return SPHERE_AREA * grid.h * float(np.dot(grid.areas, face_values))


def stiffness_apply(grid: RadialGrid, values) -> np.ndarray:
    f = np.asarray(values)
    flux = grid.areas * face_gradient(grid, f)
    out = np.zeros(grid.n)
    out[:-1] -= flux
    out[1:] += flux
    return out


def laplacian_values(grid: RadialGrid, values) -> np.ndarray:
    return -stiffness_apply(grid, values) / grid.weights


def apply_laplacian4(f: Field) -> Field:
    """Radial Laplacian f'' + (3/r) f' with zero-flux closure at R.

    At r = 0 the scheme reduces to 8 (f_1 - f_0)/h^2, the discrete form of
    4 f''(0).
    """
    return Field(f.grid, laplacian_values(f.grid, f.values))


def apply_helmholtz(f: Field, d: float, lam: float) -> Field:
    """Forward operator (-d Lap + lam) f."""
    return Field(f.grid, -d * laplacian_values(f.grid, f.values) + lam * f.values)


def far_field_value(grid: RadialGrid, total_mass: float, d: float = 1.0) -> float:
    """Value at r = R of (-d Lap)^-1 f outside supp f: mass / (4 pi^2 d R^2)."""
    return total_mass / (4.0 * math.pi**2 * d * grid.R**2)


class HelmholtzSolver:
    """Solver for (-d Lap + lam) v = f.

    For ``lam > 0`` the closure at R is homogeneous Neumann. For ``lam == 0``
    the decay at infinity is imposed through the exact far-field value of the
    Poisson kernel at r = R.
    """

    def __init__(self, grid: RadialGrid, d: float, lam: float, far_field: bool = True):
        if not d > 0:
            raise ValueError("d must be positive")
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.grid = grid
        self.d = float(d)
        self.lam = float(lam)
        self.far_field = far_field
        if self.lam == 0 and not far_field:
            raise np.linalg.LinAlgError(
                "(-d Lap) with Neumann closure is singular; enable the far-field closure")
        off = d * grid.k_off
        self._lower = np.ascontiguousarray(off)
        self._upper = np.ascontiguousarray(off.copy())
        self._diag = d * grid.k_diag + lam * grid.weights
        if self.lam == 0:
            self._diag[-1] = 1.0
            self._lower[-1] = 0.0

    def solve_values(self, f) -> np.ndarray:
        grid = self.grid
        rhs = grid.weights * np.asarray(f, dtype=np.float64)
        if self.lam == 0:
            rhs[-1] = far_field_value(grid, integrate(grid, f), self.d)
        return kernels.tridiag_solve(self._lower, self._diag, self._upper, rhs)

    def solve(self, f: Field) -> Field:
        return Field(self.grid, self.solve_values(f.values))


def helmholtz_solve(f: Field, d: float, lam: float, far_field: bool = True) -> Field:
    return HelmholtzSolver(f.grid, d, lam, far_field).solve(f)


def _tol_neg(values) -> float:
    return 1e-10 * float(np.max(np.abs(values))) if len(values) else 0.0


def poisson_values(grid: RadialGrid, f, allow_negative: bool = False) -> np.ndarray:
    """U = (-Lap)^-1 f by inward integration of U'(r) = -r^-3 int_0^r s^3 f ds."""
    f = np.asarray(f, dtype=np.float64)
    if not allow_negative and f.min() < -_tol_neg(f):
        raise ValueError("poisson_solve expects a nonnegative source")
    enclosed = np.cumsum(grid.weights * f)
    increments = grid.h * enclosed[:-1] / grid.areas
    U = np.empty(grid.n)
    U[-1] = enclosed[-1] / (2.0 * grid.R**2)
    U[:-1] = U[-1] + np.cumsum(increments[::-1])[::-1]
    return U


def poisson_solve(f: Field, allow_negative: bool = False) -> Field:
    """Newtonian potential E_4 * f with E_4(x) = 1/(4 pi^2 |x|^2)."""
    return Field(f.grid, poisson_values(f.grid, f.values, allow_negative))


def exterior_gradient_energy(grid: RadialGrid, total_mass: float) -> float:
    """int_{|x|>R} |grad E_4 * f|^2 for f supported in the ball: M^2/(4 pi^2 R^2)."""
    return total_mass**2 / (4.0 * math.pi**2 * grid.R**2)


def biharmonic_factored_solve(f: Field, params: Params) -> Field:
    """v_f solving (-d1 Lap + lambda1)(-d2 Lap + lambda2) v_f = f."""
    g = HelmholtzSolver(f.grid, params.d2, params.lambda2).solve(f)
    return HelmholtzSolver(f.grid, params.d1, params.lambda1).solve(g)


def heat_semigroup(f: Field, d: float, lam: float, t: float, substeps: int = 1) -> Field:
    """exp(t (d Lap - lam)) f by Crank-Nicolson substeps with exact decay.

    ``substeps`` is a minimum: it is raised to ``positivity_substeps`` when the
    requested steps are too long for Crank-Nicolson to preserve nonnegativity.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if t == 0:
        return f
    return Field(f.grid, semigroup_values(f.grid, f.values, d, lam, t, substeps))


def positivity_substeps(grid: RadialGrid, d: float, t: float) -> int:
    """Fewest CN substeps over time t keeping V - (tau d / 2) K entrywise nonnegative.

    Then both CN factors are monotone, so nonnegative data stay nonnegative.
    """
    c_max = float(np.min(grid.weights / grid.k_diag))
    return max(1, math.ceil(t * d / (2.0 * c_max) * (1 + 1e-12)))


def semigroup_values(grid: RadialGrid, values, d, lam, t, substeps) -> np.ndarray:
    substeps = max(int(substeps), positivity_substeps(grid, d, t))
    tau = t / substeps
    return kernels.cn_propagate(grid.k_off, grid.k_diag, grid.weights, 0.5 * tau * d,
                                np.ascontiguousarray(values, dtype=np.float64),
                                substeps, math.exp(-lam * tau))
