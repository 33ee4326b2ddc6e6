"""Mild solutions by Picard iteration of the Duhamel map.

The map acts on trajectories sampled on a graded time mesh ``t_j = T (j/m)^2``:

    Phi1(t) = e^{t Lap} u0 - int_0^t e^{(t-s) Lap} div(u grad v)(s) ds
    Phi2(t) = e^{t(d1 Lap - lambda1)} v0 + int_0^t e^{(t-s)(d1 Lap - lambda1)} w(s) ds
    Phi3(t) = e^{t(d2 Lap - lambda2)} w0 + int_0^t e^{(t-s)(d2 Lap - lambda2)} u(s) ds

Each Duhamel integral is advanced along the mesh by
``I_j = S(dt) I_{j-1} + dt/2 (F_j + S(dt) F_{j-1})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate

from .core import Field, Params, RadialGrid, lp_norm
from .elliptic import face_gradient, semigroup_values
from .functionals import sobolev_norm

#: largest Crank-Nicolson substep used inside one mesh interval
MAX_SUBSTEP = 1e-3


class NonContraction(RuntimeError):
    pass


def beta(x: float, y: float) -> float:
    """B(x, y) = Gamma(x) Gamma(y) / Gamma(x + y), via log-Gamma."""
    if not (x > 0 and y > 0):
        raise ValueError("beta needs x > 0 and y > 0")
    return math.exp(math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y))


def i_lambda_p(lam: float, p: float, t: float) -> float:
    """int_0^t exp(-lam s) s^{-2(1-1/p)} ds for 1 <= p < 2.

    Adaptive quadrature with the algebraic endpoint weight handled exactly.
    """
    if not 1 <= p < 2:
        raise ValueError("p must lie in [1, 2)")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    a = 2.0 * (1.0 - 1.0 / p)
    if lam == 0:
        return t ** (1 - a) / (1 - a)
    # beyond s = 60/lam the integrand is below e^-60 relative; split to keep quad accurate
    t_cut = min(t, 60.0 / lam)
    val, _ = _integrate.quad(lambda s: math.exp(-lam * s), 0.0, t_cut, weight="alg",
                             wvar=(-a, 0.0), epsabs=0.0, epsrel=1e-12, limit=200)
    if t > t_cut:
        tail, _ = _integrate.quad(lambda s: math.exp(-lam * s) * s**-a, t_cut, t,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
        val += tail
    return val


def check_exponents(p, q):
    if not 2 < p < 4:
        raise ValueError("need 2 < p < 4")
    if not 4 * p / (p + 4) < q < 2:
        raise ValueError("need 4p/(p+4) < q < 2")


def graded_mesh(T: float, m: int = 64) -> np.ndarray:
    if not T > 0:
        raise ValueError("T must be positive")
    if m < 2:
        raise ValueError("m must be >= 2")
    return T * (np.arange(m + 1) / m) ** 2


@dataclass(frozen=True, eq=False)
class WeightedTriple:
    """(u, v, w) sampled at ``times``; arrays have shape (len(times), n)."""

    grid: RadialGrid
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: float = 3.0
    q: float = 1.8

    def __post_init__(self):
        check_exponents(self.p, self.q)
        shape = (len(self.times), self.grid.n)
        for name in ("u", "v", "w"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase")

    @classmethod
    def zeros(cls, grid, times, p=3.0, q=1.8):
        z = np.zeros((len(times), grid.n))
        return cls(grid, np.asarray(times, dtype=np.float64), z, z.copy(), z.copy(), p, q)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def at_end(self):
        return (Field(self.grid, self.u[-1]), Field(self.grid, self.v[-1]),
                Field(self.grid, self.w[-1]))

    def __sub__(self, other):
        return WeightedTriple(self.grid, self.times, self.u - other.u, self.v - other.v,
                              self.w - other.w, self.p, self.q)


def divergence_flux(grid: RadialGrid, u, v) -> np.ndarray:
    """div(u grad v) in conservative form with centered face values."""
    flux = grid.areas * face_gradient(grid, v) * 0.5 * (u[:-1] + u[1:])
    out = np.zeros(grid.n)
    out[:-1] += flux
    out[1:] -= flux
    return out / grid.weights


def _propagate(grid, f, d, lam, dt):
    sub = max(1, math.ceil(dt / MAX_SUBSTEP))
    return semigroup_values(grid, f, d, lam, dt, sub)


def _duhamel(grid, times, F, d, lam):
    """I_j = int_0^{t_j} S(t_j - s) F(s) ds by the product-trapezoid recursion."""
    out = np.zeros_like(F)
    for j in range(1, len(times)):
        dt = times[j] - times[j - 1]
        carried = _propagate(grid, out[j - 1] + 0.5 * dt * F[j - 1], d, lam, dt)
        out[j] = carried + 0.5 * dt * F[j]
    return out


def _free(grid, times, f0, d, lam):
    out = np.empty((len(times), grid.n))
    out[0] = f0
    for j in range(1, len(times)):
        out[j] = _propagate(grid, out[j - 1], d, lam, times[j] - times[j - 1])
    return out


class _Linear:
    """Cache of the free evolutions of the data, shared by all iterations."""

    def __init__(self, grid, times, data, params):
        u0, v0, w0 = (np.asarray(getattr(f, "values", f), dtype=np.float64) for f in data)
        self.u = _free(grid, times, u0, 1.0, 0.0)
        self.v = _free(grid, times, v0, params.d1, params.lambda1)
        self.w = _free(grid, times, w0, params.d2, params.lambda2)


def phi_map(triple: WeightedTriple, data, T: float, params: Params | None = None,
            _linear: _Linear | None = None) -> WeightedTriple:
    """One application of the Duhamel map to ``triple`` with data (u0, v0, w0)."""
    params = params or Params()
    grid = triple.grid
    times = triple.times
    if abs(times[-1] - T) > 1e-12 * max(1.0, T):
        raise ValueError("triple is not sampled up to T")
    lin = _linear or _Linear(grid, times, data, params)
    chem = np.array([divergence_flux(grid, triple.u[j], triple.v[j]) for j in range(len(times))])
    u = lin.u - _duhamel(grid, times, chem, 1.0, 0.0)
    v = lin.v + _duhamel(grid, times, triple.w, params.d1, params.lambda1)
    w = lin.w + _duhamel(grid, times, triple.u, params.d2, params.lambda2)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise FloatingPointError("Duhamel quadrature produced non-finite values")
    return WeightedTriple(grid, times, u, v, w, triple.p, triple.q)


@dataclass(frozen=True)
class XTNorms:
    Nu: float
    Nv: float
    Nw: float

    @property
    def total(self) -> float:
        return self.Nu + self.Nv + self.Nw


def xt_norms(triple: WeightedTriple) -> XTNorms:
    """Weighted sup-in-time norms over the positive mesh times."""
    g = triple.grid
    p, q = triple.p, triple.q
    Nu = Nv = Nw = 0.0
    for j in range(1, len(triple.times)):
        t = triple.times[j]
        Nu = max(Nu, t**0.5 * lp_norm(Field(g, triple.u[j]), 4 / 3))
        Nv = max(Nv, t ** (1 - 2 / p) * sobolev_norm(Field(g, triple.v[j]), 2, p))
        Nw = max(Nw, t ** (1.5 - 2 / q) * sobolev_norm(Field(g, triple.w[j]), 1, q))
    return XTNorms(Nu, Nv, Nw)


def xt_distance(a: WeightedTriple, b: WeightedTriple) -> float:
    return xt_norms(a - b).total


@dataclass
class PicardResult:
    fixed_point: WeightedTriple
    ratios: list
    distances: list
    converged: bool
    iterations: int


def picard_iterate(data, T: float, k_max: int = 30, tol: float = 1e-10,
                   grid: RadialGrid | None = None, params: Params | None = None,
                   m: int = 64, p: float = 3.0, q: float = 1.8) -> PicardResult:
    """Iterate the Duhamel map from the zero triple until successive iterates are within tol."""
    params = params or Params()
    if grid is None:
        grid = data[0].grid
    times = graded_mesh(T, m)
    lin = _Linear(grid, times, data, params)
    cur = WeightedTriple.zeros(grid, times, p, q)
    dists, ratios = [], []
    bad = 0
    for k in range(1, k_max + 1):
        nxt = phi_map(cur, data, T, params, lin)
        d = xt_distance(nxt, cur)
        if dists:
            r = d / dists[-1] if dists[-1] > 0 else 0.0
            ratios.append(r)
            bad = bad + 1 if r >= 1 else 0
            if bad >= 3:
                raise NonContraction(f"ratio >= 1 for 3 consecutive iterations (k={k})")
        dists.append(d)
        cur = nxt
        scale = max(1.0, xt_norms(cur).total)
        if d <= tol * scale:
            return PicardResult(cur, ratios, dists, True, k)
    return PicardResult(cur, ratios, dists, False, k_max)
