"""Parameters, radial grid, grid functions and simulation state on R^4.

Radially symmetric functions on R^4 are stored as nodal values on a uniform
mesh of [0, R]. Integrals over R^4 become ``2*pi**2 * int_0^R f(r) r**3 dr``.
The quadrature weights double as the finite-volume control volumes of the
discrete operators, so that discrete mass is exactly the conserved quantity.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

#: Area of the unit 3-sphere.
SPHERE_AREA = 2.0 * math.pi**2

#: Optimal Hardy-Littlewood-Sobolev constant for the |x-y|^-2 kernel on R^4.
C_HLS = math.sqrt(1.5) * math.pi
#: Optimal constant of ||f||_{4/3} <= C_S ||grad f||_1 on R^4.
C_S = 2.0**0.25 / (4.0 * math.sqrt(math.pi))

MIN_NODES = 16
# origin control volume, in units of h**4
_ORIGIN_WEIGHT = 1.0 / 20.0


@dataclass(frozen=True)
class Params:
    """Coefficients d1, d2 (diffusion) and lambda1, lambda2 (decay)."""

    d1: float = 1.0
    d2: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        vals = (self.d1, self.d2, self.lambda1, self.lambda2)
        if not all(math.isfinite(x) for x in vals):
            raise ValueError(f"non-finite parameters: {vals}")
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("diffusion coefficients must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("decay rates must be nonnegative")

    def require_positive_decay(self, what="this operation"):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError(f"{what} requires lambda1 > 0 and lambda2 > 0")


@dataclass(frozen=True)
class Thresholds:
    M_global: float
    M_bounded: float
    kappa_star: float


def threshold_constants(params: Params) -> Thresholds:
    """Critical masses (8 pi)^2 d1 d2 and (8 pi)^2 d1 d2 / sqrt(3).

    ``kappa_star`` is the constant C_HLS * C_S**2 / (4 pi^2) = sqrt(3)/(8 pi)^2
    appearing in the bound of int f (-Delta)^-1 f by ||f||_1 times the Fisher
    information of f.
    """
    m = (8.0 * math.pi) ** 2 * params.d1 * params.d2
    return Thresholds(M_global=m, M_bounded=m / math.sqrt(3.0),
                      kappa_star=math.sqrt(3.0) / (8.0 * math.pi) ** 2)


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform mesh r_0 = 0 < ... < r_{n-1} = R with finite-volume geometry.

    ``weights[i]`` approximates the share of ``int_0^R f r^3 dr`` owned by node i
    (trapezoid in the interior, a positive O(h^4) cell at the origin and an
    endpoint correction at R making the rule exact for cubics). ``areas[i]`` is
    the effective r^3 at the face between nodes i and i+1, chosen so the
    discrete Laplacian is exact on r^2.
    """

    R: float
    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.R / (self.n - 1)

    @property
    def k_off(self) -> np.ndarray:
        """Off-diagonal of the (symmetric) stiffness matrix K, where -K = V * Laplacian."""
        return -self.areas / self.h

    @property
    def k_diag(self) -> np.ndarray:
        d = np.zeros(self.n)
        d[:-1] += self.areas
        d[1:] += self.areas
        return d / self.h

    @property
    def digest(self) -> str:
        m = hashlib.sha256()
        m.update(repr((float(self.R), int(self.n))).encode())
        m.update(self.weights.tobytes())
        return m.hexdigest()[:16]

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n))

    def field(self, fn) -> "Field":
        """Field with values ``fn(nodes)``."""
        return Field(self, fn(self.nodes))

    def __reduce__(self):
        return (build_grid, (self.R, self.n))


def build_grid(R: float, n: int) -> RadialGrid:
    if not (isinstance(R, (int, float)) and math.isfinite(R) and R > 0):
        raise ValueError(f"R must be a positive finite length, got {R!r}")
    if int(n) != n or n < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} nodes, got {n!r}")
    n = int(n)
    R = float(R)
    h = R / (n - 1)
    r = np.arange(n) * h
    r[-1] = R

    w = h * r**3
    w[-1] *= 0.5
    w[0] = _ORIGIN_WEIGHT * h**4
    # endpoint correction: exact for 1, r, r^2, r^3
    idx = np.arange(n - 4, n)
    s = r / R
    vander = np.array([s[idx] ** m for m in range(4)])
    target = np.array([R**4 / (m + 4) - np.dot(w, s**m) for m in range(4)])
    w[idx] += np.linalg.solve(vander, target)
    if np.any(w <= 0):
        raise ValueError("grid too coarse for positive quadrature weights")

    # face areas: flux balance exact for f = r^2 (Laplacian 8)
    cum = np.cumsum(w)[:-1]
    i = np.arange(n - 1)
    areas = 8.0 * cum / ((2 * i + 1) * h)
    return RadialGrid(R=R, n=n, nodes=_readonly(r), weights=_readonly(w),
                      areas=_readonly(areas))


@dataclass(frozen=True, eq=False)
class Field:
    """Radial profile on a grid; values are stored read-only."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("field has non-finite values")
        object.__setattr__(self, "values", _readonly(v.copy() if v is self.values else v))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.grid.n

    def scaled(self, alpha: float) -> "Field":
        return Field(self.grid, alpha * self.values)

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other))

    def __mul__(self, alpha):
        return self.scaled(alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1.0)


def _vals(f):
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=np.float64)


def integrate(grid: RadialGrid, values) -> float:
    """Integral over R^4 of a radial function given by nodal values."""
    return SPHERE_AREA * float(np.dot(grid.weights, values))


def lp_norm(f: Field, p: float) -> float:
    """||f||_p on R^4 (p = inf gives the max of |f|)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return integrate(f.grid, a)
    return integrate(f.grid, a**p) ** (1.0 / p)


def mass(u: Field) -> float:
    return lp_norm(u, 1)


def gaussian_bump(width: float, mass_target: float, grid: RadialGrid) -> Field:
    """A exp(-r^2/width^2), with A fixed so the discrete mass is ``mass_target``."""
    if not width > 0:
        raise ValueError("width must be positive")
    if mass_target < 0:
        raise ValueError("mass_target must be nonnegative")
    if width < 8 * grid.h:
        raise ValueError(f"width {width} is resolved by fewer than 8 nodes (h={grid.h:.4g})")
    shape = np.exp(-(grid.nodes / width) ** 2)
    if mass_target == 0:
        return grid.zeros()
    return Field(grid, shape * (mass_target / integrate(grid, shape)))


@dataclass(frozen=True, eq=False)
class State:
    """(u, v, w) at time t together with vt = d1 Lap v - lambda1 v + w."""

    t: float
    u: Field
    v: Field
    w: Field
    vt: Field

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid


@dataclass
class Diagnostics:
    """Functional values at one time instant."""

    t: float
    mass_u: float
    mass_w: float
    entropy: float
    E_chem: float
    F_lyap: float
    D_diss: float
    L_energy: float
    D1_diss: float
    sup_u: float
    grad_v_sq: float
    norm_u_43: float
    norm_u_2: float
    int_D: float = 0.0
    int_grad_v_sq: float = 0.0
    residual: float = 0.0
