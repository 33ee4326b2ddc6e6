"""Scenario configs, batch experiments and CSV/JSON output."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Field, Params, build_grid, gaussian_bump, integrate, threshold_constants
from .elliptic import biharmonic_factored_solve, helmholtz_solve
from .evolution import StepperConfig, blowup_indicator, run
from .functionals import (bound_L_inequality_fit, constant_identity_report, hls_check,
                          make_report, minimization_gap, modified_sobolev_check,
                          sobolev_check, truncation_subinequalities)
from .picard import picard_iterate

SCHEMA_VERSION = 1
SERIES_COLUMNS = ("t", "mass_u", "entropy", "F_lyap", "D_diss", "L_energy",
                  "D1_diss", "sup_u", "residual")
EXPERIMENTS = ("single_run", "mass_sweep", "inequality_suite", "picard_crosscheck")
THREADS_ENV = "CHEMO4D_THREADS"

EPS_VALUES = (0.1, 1.0, 10.0)
N_VALUES = (1.0, 4.0, 16.0)
MIN_WITNESS_WIDTH = 0.2


@dataclass(frozen=True)
class ScenarioConfig:
    params: Params = field(default_factory=Params)
    R: float = 20.0
    n: int = 512
    stepper: StepperConfig = field(default_factory=StepperConfig)
    width: float = 1.0
    mass: float = 0.5  # in units of M_bounded unless mass_units == "absolute"
    mass_units: str = "M_bounded"
    signals: str = "zero"  # or "equilibrium"
    experiment: str = "single_run"
    masses: tuple = ()
    n_witnesses: int = 100
    T: float = 0.05
    picard_m: int = 64
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.signals not in ("zero", "equilibrium"):
            raise ValueError("signals must be 'zero' or 'equilibrium'")
        if self.mass_units not in ("M_bounded", "M_global", "absolute"):
            raise ValueError("mass_units must be M_bounded, M_global or absolute")
        if any(not m > 0 for m in self.masses):
            raise ValueError("mass list entries must be positive")
        if self.n_witnesses < 1:
            raise ValueError("n_witnesses must be >= 1")

    def absolute_mass(self, m=None) -> float:
        m = self.mass if m is None else m
        th = threshold_constants(self.params)
        return {"M_bounded": th.M_bounded, "M_global": th.M_global, "absolute": 1.0}[self.mass_units] * m

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["masses"] = list(self.masses)
        return d

    @property
    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _bool(s):
    return str(s).strip().lower() in ("1", "true", "yes", "on")


def load_config(path=None, **overrides) -> ScenarioConfig:
    """Read an INI file (sections params, grid, stepper, initial, experiment), then apply overrides.

    Overrides use flat names: ``seed``, ``output_dir``, ``n``, ``R``, ``dt``,
    ``masses``, ``n_witnesses``, ``T``, ``experiment``.
    """
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    sec = lambda name: cp[name] if cp.has_section(name) else {}
    p = sec("params")
    params = Params(**{k: float(p[k]) for k in ("d1", "d2", "lambda1", "lambda2") if k in p})
    st = sec("stepper")
    skw = {}
    for k in ("dt", "cfl_safety", "t_end", "dt_min"):
        if k in st:
            skw[k] = float(st[k])
    for k in ("snapshot_every", "max_steps"):
        if k in st:
            skw[k] = int(st[k])
    for k in ("clip_negatives", "upwind"):
        if k in st:
            skw[k] = _bool(st[k])
    if overrides.get("dt") is not None:
        skw["dt"] = float(overrides["dt"])
    g = sec("grid")
    ini = sec("initial")
    ex = sec("experiment")
    kw = dict(params=params, stepper=StepperConfig(**skw))
    if "R" in g:
        kw["R"] = float(g["R"])
    if "n" in g:
        kw["n"] = int(g["n"])
    for k, conv in (("width", float), ("mass", float), ("mass_units", str), ("signals", str)):
        if k in ini:
            kw[k] = conv(ini[k])
    for k, conv in (("experiment", str), ("n_witnesses", int), ("T", float),
                    ("picard_m", int), ("seed", int), ("output_dir", str)):
        if k in ex:
            kw[k] = conv(ex[k])
    if "masses" in ex:
        kw["masses"] = parse_masses(ex["masses"])
    for k in ("seed", "output_dir", "n", "R", "n_witnesses", "T", "experiment", "masses"):
        if overrides.get(k) is not None:
            kw[k] = overrides[k]
    if "masses" in kw:
        kw["masses"] = tuple(float(m) for m in kw["masses"])
    return ScenarioConfig(**kw)


def parse_masses(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    parts = [s for s in str(text).replace(",", " ").split() if s]
    return tuple(float(s) for s in parts)


# -- output helpers --------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if dataclasses.is_dataclass(x):
        return _jsonable(dataclasses.asdict(x))
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _pool_map(fn, items):
    items = list(items)
    nt = min(_threads(), len(items))
    if nt <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(fn, items))


# -- scenarios -------------------------------------------------------------

def initial_data(cfg: ScenarioConfig, mass=None):
    grid = build_grid(cfg.R, cfg.n)
    u0 = gaussian_bump(cfg.width, cfg.absolute_mass(mass), grid)
    if cfg.signals == "zero":
        return u0, grid.zeros(), grid.zeros()
    w0 = helmholtz_solve(u0, cfg.params.d2, cfg.params.lambda2)
    v0 = helmholtz_solve(w0, cfg.params.d1, cfg.params.lambda1)
    return u0, v0, w0


def single_run(cfg: ScenarioConfig, mass=None):
    u0, v0, w0 = initial_data(cfg, mass)
    return run(u0, v0, w0, cfg.params, cfg.stepper, seed=cfg.seed, config_hash=cfg.digest)


def series_rows(ts):
    return [[getattr(r, c) for c in SERIES_COLUMNS] for r in ts.records]


def _summarize_run(ts, cfg):
    out = {"status": ts.meta["status"], "steps": ts.meta["steps"],
           "clipped_mass": ts.meta["clipped_mass"],
           "max_step_mass_drift": ts.meta["max_step_mass_drift"],
           "records": len(ts.records)}
    for k in ("reason", "failure_time"):
        if k in ts.meta:
            out[k] = ts.meta[k]
    m = ts.column("mass_u")
    out["mass_drift"] = float(np.max(np.abs(m / m[0] - 1))) if m[0] else 0.0
    out["final_sup_u"] = float(ts.records[-1].sup_u)
    out["max_L"] = float(ts.column("L_energy").max())
    if len(ts.records) >= 8:
        out["verdict"] = dataclasses.asdict(blowup_indicator(ts))
    if len(ts.records) >= 16 and cfg.params.lambda1 > 0 and cfg.params.lambda2 > 0:
        out["bound_L_fit"] = dataclasses.asdict(bound_L_inequality_fit(ts))
    return out


def _sweep_row(args):
    cfg, m = args
    th = threshold_constants(cfg.params)
    mabs = cfg.absolute_mass(m)
    row = {"mass": m, "mass_abs": mabs, "below_M_bounded": mabs < th.M_bounded,
           "below_M_global": mabs < th.M_global}
    try:
        ts = single_run(cfg, m)
        s = _summarize_run(ts, cfg)
        row.update(status=s["status"], verdict=s.get("verdict", {}).get("verdict", "n/a"),
                   peak_growth=s.get("verdict", {}).get("peak_growth", math.nan),
                   final_sup_u=s["final_sup_u"], max_L=s["max_L"])
        fit = s.get("bound_L_fit")
        row.update(C1_hat=fit["C1_hat"] if fit else math.nan,
                   C2_hat=fit["C2_hat"] if fit else math.nan,
                   violation_fraction=fit["violation_fraction"] if fit else math.nan,
                   fit_conforming=fit["conforming"] if fit else False, error="")
    except Exception as exc:  # isolate the row
        row.update(status="failed", verdict="n/a", peak_growth=math.nan, final_sup_u=math.nan,
                   max_L=math.nan, C1_hat=math.nan, C2_hat=math.nan,
                   violation_fraction=math.nan, fit_conforming=False,
                   error=f"{type(exc).__name__}: {exc}")
    return row


SWEEP_COLUMNS = ("mass", "mass_abs", "below_M_bounded", "below_M_global", "status", "verdict",
                 "peak_growth", "final_sup_u", "max_L", "C1_hat", "C2_hat",
                 "violation_fraction", "fit_conforming", "error")


def mass_sweep(cfg: ScenarioConfig, masses) -> list:
    masses = [float(m) for m in masses]
    if masses != sorted(masses):
        raise ValueError("masses must be sorted ascending")
    return _pool_map(_sweep_row, [(cfg, m) for m in masses])


# -- inequality suite --------------------------------------------------------

def witness_grid(cfg: ScenarioConfig):
    """Grid for the suite: the configured one, refined if the narrowest bump needs it."""
    n_needed = math.ceil(8 * cfg.R / MIN_WITNESS_WIDTH) + 1
    return build_grid(cfg.R, max(cfg.n, n_needed))


def random_witness(grid, rng):
    """Mixture of 1-4 Gaussian bumps, widths log-uniform in [0.2, 4], masses in [1, 500]."""
    k = int(rng.integers(1, 5))
    widths = np.exp(rng.uniform(math.log(0.2), math.log(4.0), k))
    masses = rng.uniform(1.0, 500.0, k)
    vals = sum(gaussian_bump(w, m, grid).values for w, m in zip(widths, masses))
    desc = "+".join(f"bump(w={w:.4g},m={m:.4g})" for w, m in zip(widths, masses))
    return Field(grid, vals), desc


def _witness_rows(args):
    cfg, idx, seq = args
    grid = witness_grid(cfg)
    rng = np.random.default_rng(seq)
    f, desc = random_witness(grid, rng)
    reports = [hls_check(f, desc), sobolev_check(f, desc)]
    reports += [modified_sobolev_check(f, e, desc) for e in EPS_VALUES]
    for N in N_VALUES:
        reports += [dataclasses.replace(r, name=f"{r.name}(N={N:g})")
                    for r in truncation_subinequalities(f, N, witness=desc)]
    # chemical-energy minimization at a random perturbation of the minimizer
    amp = float(rng.uniform(0.1, 10.0))
    wid = float(np.exp(rng.uniform(math.log(0.5), math.log(4.0))))
    vu = biharmonic_factored_solve(f, cfg.params)
    pert = grid.field(lambda r: amp * np.exp(-(r / wid) ** 2) * np.cos(r / wid))
    mg = minimization_gap(vu + pert, f, cfg.params)
    scale = abs(mg.gap) + abs(mg.quadratic_form) + abs(integrate(grid, f.values * vu.values))
    reports.append(make_report("minimization_gap", 0.0, mg.gap, desc, slack=1e-8 * scale))
    reports.append(make_report("minimization_identity", abs(mg.gap - mg.quadratic_form), 0.0, desc,
                               slack=1e-8 * max(abs(mg.gap), abs(mg.quadratic_form), 1e-300)))
    return [(idx, r) for r in reports]


INEQ_COLUMNS = ("witness", "check", "lhs", "rhs", "margin", "slack", "passed", "description")


def inequality_suite(cfg: ScenarioConfig, n_witnesses: int):
    if n_witnesses < 1:
        raise ValueError("n_witnesses must be >= 1")
    seqs = np.random.SeedSequence(cfg.seed).spawn(n_witnesses)
    blocks = _pool_map(_witness_rows, [(cfg, i, s) for i, s in enumerate(seqs)])
    rows = [(-1, constant_identity_report())]
    for b in blocks:
        rows.extend(b)
    return rows


# -- Picard cross-check --------------------------------------------------------

def picard_crosscheck(cfg: ScenarioConfig, T: float) -> dict:
    if not 0 < T <= 0.5:
        raise ValueError("T must lie in (0, 0.5]")
    u0, v0, w0 = initial_data(cfg)
    grid = u0.grid
    res = picard_iterate((u0, v0, w0), T, grid=grid, params=cfg.params, m=cfg.picard_m)
    st = dataclasses.replace(cfg.stepper, t_end=T, keep_states=True, snapshot_every=10**9)
    ts = run(u0, v0, w0, cfg.params, st)
    end = ts.states[-1]
    pu, pv, pw = res.fixed_point.at_end()
    out = {"T": T, "iterations": res.iterations, "converged": res.converged,
           "ratios": list(res.ratios), "max_ratio": max(res.ratios, default=0.0),
           "imex_status": ts.meta["status"], "imex_steps": ts.meta["steps"]}
    for name, a, b in (("u", end.u, pu), ("v", end.v, pv), ("w", end.w, pw)):
        ref = math.sqrt(integrate(grid, b.values**2))
        diff = math.sqrt(integrate(grid, (a.values - b.values) ** 2))
        out[f"rel_l2_{name}"] = diff / ref if ref > 0 else diff
    return out


# -- driver --------------------------------------------------------------------

def run_scenario(cfg: ScenarioConfig) -> dict:
    """Run the configured experiment, write its outputs and return the summary."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment,
               "config_hash": cfg.digest, "config": cfg.to_dict(), "partial": False}
    ok = True
    try:
        if cfg.experiment == "single_run":
            ts = single_run(cfg)
            write_csv(out / "series.csv", SERIES_COLUMNS, series_rows(ts))
            summary["run"] = _summarize_run(ts, cfg)
            ok = summary["run"]["status"] == "completed"
        elif cfg.experiment == "mass_sweep":
            rows = mass_sweep(cfg, cfg.masses)
            write_csv(out / "sweep.csv", SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows])
            summary["rows"] = rows
            ok = all(r["status"] != "failed" for r in rows)
        elif cfg.experiment == "inequality_suite":
            rows = inequality_suite(cfg, cfg.n_witnesses)
            write_csv(out / "inequalities.csv", INEQ_COLUMNS,
                      [[i, r.name, r.lhs, r.rhs, r.margin, r.slack, r.passed, r.witness]
                       for i, r in rows])
            fails = [r.name for _, r in rows if not r.passed]
            summary.update(n_rows=len(rows), n_failures=len(fails), failing_checks=sorted(set(fails)),
                           grid_n=witness_grid(cfg).n)
            ok = not fails
        else:
            rep = picard_crosscheck(cfg, cfg.T)
            write_json(out / "crosscheck.json", rep)
            summary["crosscheck"] = rep
    except Exception as exc:
        summary["partial"] = True
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        ok = False
    summary["ok"] = ok
    summary["wall_time"] = time.perf_counter() - t0
    write_json(out / "summary.json", summary)
    return summary
