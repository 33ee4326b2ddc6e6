"""Entropy, energies, dissipations and functional-inequality checks.

Conventions for the discrete forms:

* node quantities are integrated with the control volumes (``integrate``);
* gradient quantities live on faces and are integrated with the dual cells
  ``A h`` (``face_integral``), so that ``||grad v||^2 = v^T K v`` and
  ``||Lap v||^2 = v^T K V^-1 K v``.  With these, the chemical energy is an exact
  discrete quadratic whose minimizer is the factored elliptic solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (C_HLS, C_S, Diagnostics, Field, Params, RadialGrid, State,
                   integrate, lp_norm, mass)
from .elliptic import (biharmonic_factored_solve, exterior_gradient_energy,
                       face_gradient, face_integral, laplacian_values,
                       node_gradient, poisson_values)

SLACK_REL = 1e-8


def default_slack(lhs, rhs, rel=SLACK_REL):
    return rel * (abs(lhs) + abs(rhs) + 1.0)


@dataclass(frozen=True)
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    slack: float
    witness: str = ""


def make_report(name, lhs, rhs, witness="", slack=None):
    lhs, rhs = float(lhs), float(rhs)
    if slack is None:
        slack = default_slack(lhs, rhs)
    margin = rhs - lhs
    return InequalityReport(name, lhs, rhs, margin, margin >= -slack, slack, witness)


def constant_identity_report():
    """C_HLS C_S^2 / (4 pi^2) against sqrt(3)/(8 pi)^2."""
    lhs = C_HLS * C_S**2 / (4 * math.pi**2)
    rhs = math.sqrt(3) / (8 * math.pi) ** 2
    return make_report("constant_identity", lhs, rhs, "C_HLS*C_S^2/(4pi^2)", slack=1e-14)


# -- building blocks -------------------------------------------------------

def grad_sq(grid: RadialGrid, values) -> float:
    """||grad f||_2^2."""
    return face_integral(grid, face_gradient(grid, values) ** 2)


def lap_sq(grid: RadialGrid, values) -> float:
    """||Lap f||_2^2."""
    return integrate(grid, laplacian_values(grid, values) ** 2)


def l2_sq(grid: RadialGrid, values) -> float:
    return integrate(grid, np.asarray(values) ** 2)


def _nonneg(values, what):
    values = np.asarray(values, dtype=np.float64)
    tol = 1e-10 * float(np.max(np.abs(values))) if values.size else 0.0
    if values.min() < -tol:
        raise ValueError(f"{what} has negative values beyond tolerance ({values.min():.3e})")
    return np.maximum(values, 0.0)


def fisher_integral(grid: RadialGrid, values) -> float:
    """int |grad f|^2 / (1 + f), f >= 0.

    The face weight uses 1/(1 + min of the two nodal values), an upper-biased
    but consistent choice that keeps the pointwise chain-rule bounds valid on
    the grid.
    """
    f = _nonneg(values, "f")
    g = face_gradient(grid, f)
    fmin = np.minimum(f[:-1], f[1:])
    return face_integral(grid, g**2 / (1.0 + fmin))


def sobolev_norm(f: Field, order: int, p: float) -> float:
    """Radial W^{k,p} proxy: sum of L^p norms of f, f', Lap f and f'/r."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    grid = f.grid
    total = lp_norm(f, p)
    if order == 0:
        return total
    df = node_gradient(grid, f.values)
    total += lp_norm(Field(grid, df), p)
    if order == 2:
        lap = laplacian_values(grid, f.values)
        over_r = np.empty(grid.n)
        over_r[1:] = df[1:] / grid.nodes[1:]
        over_r[0] = 2.0 * (f.values[1] - f.values[0]) / grid.h**2
        total += lp_norm(Field(grid, lap), p) + lp_norm(Field(grid, over_r), p)
    return total


def modified_entropy(u: Field) -> float:
    """int (1+u) log(1+u) dx."""
    x = _nonneg(u.values, "u")
    return integrate(u.grid, (1.0 + x) * np.log1p(x))


def chemical_energy(v: Field, f: Field, params: Params) -> float:
    p = params
    grid = v.grid
    return (0.5 * p.d1 * p.d2 * lap_sq(grid, v.values)
            + 0.5 * (p.d1 * p.lambda2 + p.d2 * p.lambda1) * grad_sq(grid, v.values)
            + 0.5 * p.lambda1 * p.lambda2 * l2_sq(grid, v.values)
            - integrate(grid, f.values * v.values))


def chemical_quadratic_form(delta: Field, params: Params) -> float:
    """Quadratic part of the chemical energy evaluated on ``delta``."""
    return chemical_energy(delta, delta.grid.zeros(), params)


@dataclass(frozen=True)
class MinimizationGap:
    gap: float
    quadratic_form: float
    minimizer: Field


def minimization_gap(v: Field, u: Field, params: Params) -> MinimizationGap:
    """E(v;u) - E(v_u;u), and the quadratic form of v - v_u it should equal."""
    _nonneg(u.values, "u")
    vu = biharmonic_factored_solve(u, params)
    gap = chemical_energy(v, u, params) - chemical_energy(vu, u, params)
    return MinimizationGap(gap, chemical_quadratic_form(v - vu, params), vu)


def lyapunov_F(state: State, params: Params) -> float:
    return (modified_entropy(state.u) + 0.5 * l2_sq(state.grid, state.vt.values)
            + chemical_energy(state.v, state.u, params))


def dissipation_terms(state: State, params: Params):
    """The four nonnegative terms of the Lyapunov dissipation."""
    grid = state.grid
    u = _nonneg(state.u.values, "u")
    v = state.v.values
    lg = np.log1p(u)
    u_face = 0.5 * (u[:-1] + u[1:])
    t1 = face_integral(grid, u_face * face_gradient(grid, lg - v) ** 2)
    t2 = face_integral(grid, face_gradient(grid, lg - 0.5 * v) ** 2)
    t3 = (params.d1 + params.d2) * grad_sq(grid, state.vt.values)
    t4 = (params.lambda1 + params.lambda2) * l2_sq(grid, state.vt.values)
    return t1, t2, t3, t4


def dissipation_D(state: State, params: Params) -> float:
    return float(sum(dissipation_terms(state, params)))


def _trapezoid_cumulative(t, y):
    t = np.asarray(t)
    y = np.asarray(y)
    out = np.zeros_like(y, dtype=np.float64)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def lyapunov_identity_residual(series) -> np.ndarray:
    """F(t) + int_0^t D - F(0) - 1/4 int_0^t ||grad v||^2, over max(1, |F(0)|).

    Uses the per-step running integrals carried in the records when the run
    tracked them, else the trapezoid rule over the record times.
    """
    recs = series.records
    if len(recs) < 3:
        raise ValueError("need at least 3 records")
    t = np.array([r.t for r in recs])
    F = np.array([r.F_lyap for r in recs])
    if series.meta.get("running_integrals", False):
        int_D = np.array([r.int_D for r in recs])
        int_g = np.array([r.int_grad_v_sq for r in recs])
    else:
        int_D = _trapezoid_cumulative(t, [r.D_diss for r in recs])
        int_g = _trapezoid_cumulative(t, [r.grad_v_sq for r in recs])
    res = F + int_D - F[0] - 0.25 * int_g
    return res / max(1.0, abs(F[0]))


def _gradient_energy_W(grid, w, allow_negative=False):
    """||grad (E_4 * w)||^2 over R^4, with the exact exterior contribution."""
    W = poisson_values(grid, w, allow_negative=allow_negative)
    inner = grad_sq(grid, W)
    return inner + exterior_gradient_energy(grid, integrate(grid, w))


def chemical_energy0(state: State, params: Params) -> float:
    p = params
    grid = state.grid
    v = state.v.values
    return (l2_sq(grid, state.vt.values) + p.d1 * p.d2 * lap_sq(grid, v)
            + (p.d1 * p.lambda2 + p.d2 * p.lambda1) * grad_sq(grid, v)
            + p.lambda1 * p.lambda2 * l2_sq(grid, v))


def energy_L(state: State, params: Params) -> float:
    p = params
    grid = state.grid
    w = _nonneg(state.w.values, "w")
    out = (modified_entropy(state.u) + chemical_energy0(state, p) / (2 * p.d1)
           + l2_sq(grid, w) / (2 * p.d1))
    if p.lambda2 != 0:
        out += p.lambda2 / (p.d1 * p.d2) * _gradient_energy_W(grid, w)
    return out


def dissipation_D1(state: State, params: Params) -> float:
    p = params
    grid = state.grid
    u = _nonneg(state.u.values, "u")
    w = _nonneg(state.w.values, "w")
    vt = state.vt.values
    wt = p.d2 * laplacian_values(grid, w) - p.lambda2 * w + u
    d0 = (fisher_integral(grid, u) + (p.lambda1 + p.lambda2) / p.d1 * l2_sq(grid, vt)
          + (p.d1 + p.d2) / p.d1 * grad_sq(grid, vt))
    out = d0 + _gradient_energy_W(grid, wt, allow_negative=True) / (p.d1 * p.d2)
    out += p.lambda2 / p.d1 * l2_sq(grid, w)
    if p.lambda2 != 0:
        out += p.lambda2**2 / (p.d1 * p.d2) * _gradient_energy_W(grid, w)
    return out


def diagnostics(state: State, params: Params) -> Diagnostics:
    grid = state.grid
    u = state.u
    entropy = modified_entropy(u)
    E = chemical_energy(state.v, u, params)
    return Diagnostics(
        t=state.t,
        mass_u=mass(u),
        mass_w=mass(state.w),
        entropy=entropy,
        E_chem=E,
        F_lyap=entropy + 0.5 * l2_sq(grid, state.vt.values) + E,
        D_diss=dissipation_D(state, params),
        L_energy=energy_L(state, params),
        D1_diss=dissipation_D1(state, params),
        sup_u=lp_norm(u, math.inf),
        grad_v_sq=grad_sq(grid, state.v.values),
        norm_u_43=lp_norm(u, 4 / 3),
        norm_u_2=lp_norm(u, 2),
    )


# -- Brezis-Merle ----------------------------------------------------------

@dataclass(frozen=True)
class BrezisMerle:
    integral: float
    bound_rhs: float
    mass: float


def brezis_merle_integral(f: Field, params: Params) -> BrezisMerle:
    """int (e^{v_f} - 1) dx and the right-hand side of its bound with C = 1."""
    params.require_positive_decay("the Brezis-Merle integral")
    f_vals = _nonneg(f.values, "f")
    p = params
    m = integrate(f.grid, f_vals)
    critical = 32 * math.pi**2 * p.d1 * p.d2
    if m >= critical:
        raise ValueError(f"mass {m:.6g} must be below 32 pi^2 d1 d2 = {critical:.6g}")
    vf = biharmonic_factored_solve(Field(f.grid, f_vals), p)
    gamma = 1.0 / (8 * math.pi**2 * p.d1 * p.d2)
    kappa = min(p.lambda1 / p.d1, p.lambda2 / p.d2)
    rhs = math.exp(2 * gamma * m) / kappa * (2 ** (gamma * m) / (critical - m) + 1.0)
    return BrezisMerle(integrate(f.grid, np.expm1(vf.values)), rhs, m)


# -- inequality checks -----------------------------------------------------

def phi_N(r, N):
    """0 on [0,N], 2(r-N) on [N,2N], r beyond."""
    r = np.asarray(r, dtype=np.float64)
    return np.where(r <= N, 0.0, np.where(r <= 2 * N, 2 * (r - N), r))


def truncation_subinequalities(f: Field, N: float, p: float = 1.5,
                               witness: str = "") -> tuple:
    """The three explicit bounds behind the L^p interpolation with cutoff phi_N.

    (a) ||grad phi_N(sqrt f)||^2 <= 2 int |grad f|^2/(1+f)
    (b) ||phi_N(sqrt f)||^2 <= int (1+f)log(1+f) / log(1+N^2)
    (c) ||phi_N(sqrt f) - sqrt f||_{2p}^{2p} <= (2N)^{2(p-1)} ||f||_1
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    grid = f.grid
    fv = _nonneg(f.values, "f")
    root = np.sqrt(fv)
    g = phi_N(root, N)
    a = make_report("truncation_grad", grad_sq(grid, g), 2 * fisher_integral(grid, fv), witness)
    b = make_report("truncation_l2", l2_sq(grid, g),
                    modified_entropy(Field(grid, fv)) / math.log1p(N**2), witness)
    c = make_report("truncation_remainder", integrate(grid, np.abs(g - root) ** (2 * p)),
                    (2 * N) ** (2 * (p - 1)) * integrate(grid, fv), witness)
    return a, b, c


def modified_sobolev_check(f: Field, eps: float, witness: str = "") -> InequalityReport:
    """||f||_{4/3}^2 <= C_S^2 (1+eps)^2 ||f||_1 int|grad f|^2/(1+f) + sqrt(1+eps)/eps (4/3)^{3/2} ||f||_1^{3/2}."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    fv = _nonneg(f.values, "f")
    ff = Field(f.grid, fv)
    m = mass(ff)
    lhs = lp_norm(ff, 4 / 3) ** 2
    rhs = (C_S**2 * (1 + eps) ** 2 * m * fisher_integral(f.grid, fv)
           + math.sqrt(1 + eps) / eps * (4 / 3) ** 1.5 * m**1.5)
    return make_report(f"modified_sobolev(eps={eps:g})", lhs, rhs, witness)


def hls_check(f: Field, witness: str = "") -> InequalityReport:
    """int f (-Lap)^-1 f <= C_HLS / (4 pi^2) ||f||_{4/3}^2."""
    fv = _nonneg(f.values, "f")
    U = poisson_values(f.grid, fv)
    lhs = integrate(f.grid, fv * U)
    rhs = C_HLS / (4 * math.pi**2) * lp_norm(Field(f.grid, fv), 4 / 3) ** 2
    return make_report("hls", lhs, rhs, witness)


def sobolev_check(f: Field, witness: str = "") -> InequalityReport:
    """||f||_{4/3} <= C_S ||grad f||_1."""
    grid = f.grid
    lhs = lp_norm(f, 4 / 3)
    rhs = C_S * face_integral(grid, np.abs(face_gradient(grid, f.values)))
    return make_report("sobolev", lhs, rhs, witness)


def chained_hls_bound(f: Field, eps: float) -> InequalityReport:
    """int f(-Lap)^-1 f <= kappa* (1+eps)^2 ||f||_1 int|grad f|^2/(1+f) + lower order."""
    fv = _nonneg(f.values, "f")
    ff = Field(f.grid, fv)
    hls = hls_check(ff)
    ms = modified_sobolev_check(ff, eps)
    return make_report(f"hls_chain(eps={eps:g})", hls.lhs, C_HLS / (4 * math.pi**2) * ms.rhs)


# -- differential inequality fit -------------------------------------------

@dataclass(frozen=True)
class BoundLFit:
    C1_hat: float
    C2_hat: float
    violation_fraction: float
    conforming: bool
    implied_bound: float


def bound_L_inequality_fit(series, quantile: float = 0.99,
                           c1_grid=None) -> BoundLFit:
    """Fit dL/dt + C1 L + C1 D1 <= C2 over the records of a run.

    For each C1 on a log grid in (0, 1], C2(C1) is the ``quantile`` of
    dL/dt + C1 (L + D1) over the records (floored at 0). The reported pair is
    the one minimizing the implied long-time bound C2/C1 (ties go to the
    larger C1).
    """
    recs = series.records
    if len(recs) < 16:
        raise ValueError("need at least 16 records")
    t = np.array([r.t for r in recs])
    L = np.array([r.L_energy for r in recs])
    D1 = np.array([r.D1_diss for r in recs])
    dL = np.gradient(L, t)
    if c1_grid is None:
        c1_grid = np.logspace(-4, 0, 81)
    best = None
    for c1 in c1_grid:
        lhs = dL + c1 * (L + D1)
        c2 = max(0.0, float(np.quantile(lhs, quantile, method="higher")))
        key = (c2 / c1, -c1)
        if best is None or key <= best[0]:
            best = (key, c1, c2)
    _, c1, c2 = best
    lhs = dL + c1 * (L + D1)
    viol = float(np.mean(lhs > c2 * (1 + 1e-12) + 1e-300))
    return BoundLFit(float(c1), c2, viol, viol <= 1 - quantile + 1e-12, c2 / c1)
