"""IMEX time stepping for the coupled cell / signal / precursor system.

One step of size dt:

1. u: explicit flux-form advection along grad v^n (upwind by default), then
   backward-Euler diffusion, ``(V + dt K) u1 = V u0 - dt (F_out - F_in)``.
   Face fluxes telescope, so ``sum(V u)`` is conserved to roundoff.
2. w: backward-Euler diffusion with source u1, decay applied as the exact
   factor ``exp(-lambda2 dt)``.
3. v: same with source w1.
4. vt = d1 Lap v1 - lambda1 v1 + w1.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .core import SPHERE_AREA, Diagnostics, Field, Params, RadialGrid, State
from .elliptic import face_gradient, laplacian_values
from .functionals import diagnostics, dissipation_D, grad_sq


class CFLViolation(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    def __init__(self, t, what="state"):
        super().__init__(f"non-finite {what} at t={t:.6g}")
        self.t = t


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    cfl_safety: float = 0.5
    t_end: float = 10.0
    snapshot_every: int = 50
    clip_negatives: bool = True
    upwind: bool = True
    # False freezes the drift term (grad v treated as 0 in the u equation)
    chemotaxis: bool = True
    keep_states: bool = False
    # a run whose CFL step falls below dt_min (or exceeds max_steps) is aborted
    dt_min: float = 1e-9
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must be in (0, 1]")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")


@dataclass
class TimeSeries:
    params: Params
    grid_digest: str
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, rec: Diagnostics, state: State | None = None):
        if self.records and not rec.t > self.records[-1].t:
            raise ValueError("record times must be strictly increasing")
        if not self.records and rec.t != 0.0:
            raise ValueError("first record must be at t=0")
        self.records.append(rec)
        if state is not None:
            self.states.append(state)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def make_state(t, u: Field, v: Field, w: Field, params: Params) -> State:
    vt = params.d1 * laplacian_values(u.grid, v.values) - params.lambda1 * v.values + w.values
    return State(t, u, v, w, Field(u.grid, vt))


def cfl_limit(grid: RadialGrid, u, v) -> float:
    """Largest explicit advection step: min of h/max|v_r| and the positivity limit.

    The positivity limit bounds the upwind outflow of each control volume by its
    content, ``dt (A+ a+ + A- a-) <= V``.
    """
    a = face_gradient(grid, v)
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if amax == 0.0:
        return math.inf
    out = np.zeros(grid.n)
    out[:-1] += grid.areas * np.maximum(a, 0.0)
    out[1:] += grid.areas * np.maximum(-a, 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        pos = float(np.min(np.where(out > 0, grid.weights / out, np.inf)))
    return min(grid.h / amax, pos)


def _diffuse(grid, coef, rhs, decay):
    lo = np.ascontiguousarray(coef * grid.k_off)
    di = grid.weights + coef * grid.k_diag
    return kernels.tridiag_solve(lo, di, lo, rhs) * decay


def _advance(state: State, params: Params, dt: float, upwind=True, clip=True,
             chemotaxis=True):
    """One IMEX step; returns (new state, clipped mass, relative mass drift)."""
    grid = state.grid
    u0 = state.u.values
    V = grid.weights
    rhs = V * u0
    if chemotaxis:
        flux = np.asarray(kernels.advective_flux(u0, state.v.values, grid.areas,
                                                 1.0 / grid.h, bool(upwind)))
        rhs[:-1] -= dt * flux
        rhs[1:] += dt * flux
    u1 = _diffuse(grid, dt, rhs, 1.0)
    m0 = float(np.dot(V, u0))
    drift = abs(float(np.dot(V, u1)) - m0) / max(abs(m0), 1e-300)
    clipped = 0.0
    if clip:
        neg = u1 < 0
        if neg.any():
            clipped = -SPHERE_AREA * float(np.dot(V[neg], u1[neg]))
            u1 = np.where(neg, 0.0, u1)
    t1 = state.t + dt
    if not np.all(np.isfinite(u1)):
        raise NonFiniteState(t1, "u")
    w1 = _diffuse(grid, dt * params.d2, V * (state.w.values + dt * u1),
                  math.exp(-params.lambda2 * dt))
    v1 = _diffuse(grid, dt * params.d1, V * (state.v.values + dt * w1),
                  math.exp(-params.lambda1 * dt))
    if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(v1))):
        raise NonFiniteState(t1, "v or w")
    new = make_state(t1, Field(grid, u1), Field(grid, v1), Field(grid, w1), params)
    return new, clipped, drift



def step(state: State, params: Params, dt: float, upwind: bool = True,
         clip_negatives: bool = True, chemotaxis: bool = True) -> State:
    """Advance ``state`` by ``dt``; raises CFLViolation if dt exceeds the CFL limit."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if chemotaxis:
        lim = cfl_limit(state.grid, state.u.values, state.v.values)
        if dt > lim:
            raise CFLViolation(f"dt={dt:.3g} exceeds the CFL limit {lim:.3g} at t={state.t:.6g}")
    return _advance(state, params, dt, upwind, clip_negatives, chemotaxis)[0]


def _record(state, params, int_D, int_g, F0):
    rec = diagnostics(state, params)
    rec.int_D = int_D
    rec.int_grad_v_sq = int_g
    rec.residual = (rec.F_lyap + int_D - F0 - 0.25 * int_g) / max(1.0, abs(F0))
    return rec


def run(u0: Field, v0: Field, w0: Field, params: Params, cfg: StepperConfig,
        seed: int | None = None, config_hash: str | None = None) -> TimeSeries:
    """Integrate to cfg.t_end, recording diagnostics every cfg.snapshot_every steps.

    The last step is shortened to land on t_end, and the final state is always
    recorded. Running integrals of D and ||grad v||^2 are accumulated
    by the trapezoid rule over every step.
    """
    for name, f in (("u0", u0), ("w0", w0)):
        if f.values.min() < -1e-12 * max(1.0, float(np.abs(f.values).max())):
            raise ValueError(f"{name} must be nonnegative")
    grid = u0.grid
    state = make_state(0.0, u0, v0, w0, params)
    ts = TimeSeries(params, grid.digest, meta={
        "seed": seed, "config_hash": config_hash, "running_integrals": True,
        "upwind": cfg.upwind, "status": "completed"})
    started = _time.perf_counter()
    first = _record(state, params, 0.0, 0.0, 0.0)
    F0 = first.F_lyap
    first.residual = 0.0
    ts.append(first, state if cfg.keep_states else None)

    D_prev = first.D_diss
    g_prev = first.grad_v_sq
    int_D = int_g = 0.0
    clipped_total = 0.0
    max_drift = 0.0
    min_dt = math.inf
    steps = 0
    t_end = cfg.t_end
    last_recorded = 0
    try:
        while state.t < t_end * (1 - 1e-14):
            if steps >= cfg.max_steps:
                raise _Abort("max_steps")
            lim = (cfg.cfl_safety * cfl_limit(grid, state.u.values, state.v.values)
                   if cfg.chemotaxis else math.inf)
            dt = min(cfg.dt, lim, t_end - state.t)
            if dt < cfg.dt_min and t_end - state.t > cfg.dt_min:
                raise _Abort("dt-collapse", state.t)
            state, clipped, drift = _advance(state, params, dt, cfg.upwind, cfg.clip_negatives,
                                              cfg.chemotaxis)
            if abs(state.t - t_end) < 1e-12 * max(1.0, t_end):
                state = State(t_end, state.u, state.v, state.w, state.vt)
            steps += 1
            min_dt = min(min_dt, dt)
            clipped_total += clipped
            max_drift = max(max_drift, drift)
            D_now = dissipation_D(state, params)
            g_now = grad_sq(grid, state.v.values)
            int_D += 0.5 * dt * (D_prev + D_now)
            int_g += 0.5 * dt * (g_prev + g_now)
            D_prev, g_prev = D_now, g_now
            if steps % cfg.snapshot_every == 0 or state.t >= t_end:
                ts.append(_record(state, params, int_D, int_g, F0),
                          state if cfg.keep_states else None)
                last_recorded = steps
    except NonFiniteState as exc:
        ts.meta.update(status="aborted-nonfinite", reason="nonfinite", failure_time=exc.t)
    except _Abort as exc:
        ts.meta.update(status="aborted-nonfinite", reason=exc.reason, failure_time=exc.t)
        if last_recorded != steps:
            ts.append(_record(state, params, int_D, int_g, F0),
                      state if cfg.keep_states else None)
    ts.meta.update(steps=steps, clipped_mass=clipped_total, max_step_mass_drift=max_drift,
                   min_dt=(min_dt if steps else None),
                   wall_time=_time.perf_counter() - started)
    return ts


class _Abort(Exception):
    def __init__(self, reason, t=None):
        super().__init__(reason)
        self.reason = reason
        self.t = t


@dataclass(frozen=True)
class BlowupVerdict:
    verdict: str
    peak_growth: float


def blowup_indicator(series: TimeSeries) -> BlowupVerdict:
    """Classify a run as 'bounded', 'growing' or 'aborted-nonfinite' from sup u.

    'growing': sup u increases monotonically over the last quarter of records
    and ends at least 10x above its minimum there. 'bounded': the sup over the
    second half is at most 2x the median of the first half. A run that fits
    neither pattern is reported as 'growing' (not certified bounded).
    """
    recs = series.records
    if series.meta.get("status", "completed") != "completed":
        sup = np.array([r.sup_u for r in recs]) if recs else np.array([0.0])
        return BlowupVerdict("aborted-nonfinite", _growth(sup))
    if len(recs) < 8:
        raise ValueError("need at least 8 records")
    sup = np.array([r.sup_u for r in recs])
    n = len(sup)
    tail = sup[n - max(2, n // 4):]
    if np.all(np.diff(tail) > 0) and tail[-1] >= 10 * tail.min():
        return BlowupVerdict("growing", _growth(sup))
    half = n // 2
    if sup[half:].max() <= 2 * np.median(sup[:half]):
        return BlowupVerdict("bounded", _growth(sup))
    return BlowupVerdict("growing", _growth(sup))


def _growth(sup):
    s0 = float(sup[0])
    peak = float(np.max(sup))
    if s0 == 0:
        return 0.0 if peak == 0 else math.inf
    return peak / s0
