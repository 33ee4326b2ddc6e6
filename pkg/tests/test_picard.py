import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma, gammainc

from chemo4d.core import Params, build_grid, gaussian_bump, integrate
from chemo4d.elliptic import heat_semigroup
from chemo4d.evolution import StepperConfig, run
from chemo4d.picard import (NonContraction, WeightedTriple, beta, graded_mesh, i_lambda_p,
                            phi_map, picard_iterate, xt_norms)

from conftest import rel_l2

GRID = build_grid(20.0, 512)
Z = GRID.zeros()


def i_closed_form(lam, p, t):
    """Incomplete-Gamma form of the smoothing integral (independent of the quadrature route)."""
    a = 2 * (1 - 1 / p)
    # lam * t below the normal range cannot be fed to gammainc; the correction is O(lam t)
    if lam * t < 1e-300:
        return t ** (1 - a) / (1 - a)
    return lam ** -(1 - a) * gamma(1 - a) * gammainc(1 - a, lam * t)


def test_beta_values():
    assert beta(1, 1) == pytest.approx(1.0, rel=1e-15)
    assert beta(0.5, 0.5) == pytest.approx(math.pi, abs=1e-10)
    assert beta(2, 3) == pytest.approx(1 / 12, rel=1e-13)
    for bad in ((0, 1), (1, -2)):
        with pytest.raises(ValueError):
            beta(*bad)


def test_beta_symmetry():
    rng = np.random.default_rng(0)
    for x, y in rng.uniform(0.05, 20, (100, 2)):
        assert abs(beta(x, y) - beta(y, x)) <= 1e-12 * beta(x, y)


def test_i_lambda_p_examples():
    assert i_lambda_p(2.0, 1.0, 1.5) == pytest.approx((1 - math.exp(-3.0)) / 2.0, rel=1e-12)
    assert i_lambda_p(0.0, 1.0, 1.5) == pytest.approx(1.5, rel=1e-15)
    assert i_lambda_p(0.0, 1.5, 1.0) == pytest.approx(3.0, rel=1e-14)
    assert i_lambda_p(1.0, 1.5, 50.0) == pytest.approx(gamma(1 / 3), abs=1e-6)
    assert i_lambda_p(1.0, 1.5, 0.0) == 0.0
    with pytest.raises(ValueError):
        i_lambda_p(1.0, 2.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(1.0, 1.99), st.floats(1e-4, 100.0))
def test_i_lambda_p_matches_closed_form(lam, p, t):
    ref = i_closed_form(lam, p, t)
    val = i_lambda_p(lam, p, t)
    assert val == pytest.approx(ref, rel=1e-8)
    if lam > 0:
        s = 2 / p - 1
        assert math.log(val) <= math.lgamma(s) - s * math.log(lam) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(1.0, 1.95),
       st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_i_lambda_p_monotone(l1, l2, p, t1, t2):
    lo_l, hi_l = sorted((l1, l2))
    lo_t, hi_t = sorted((t1, t2))
    assert i_lambda_p(lo_l, p, hi_t) >= i_lambda_p(lo_l, p, lo_t) * (1 - 1e-12)
    assert i_lambda_p(lo_l, p, hi_t) >= i_lambda_p(hi_l, p, hi_t) * (1 - 1e-12)


def test_exponent_checks():
    times = graded_mesh(0.1, 8)
    for p, q in ((2.0, 1.8), (3.0, 1.6), (3.0, 2.0), (4.5, 1.9)):
        with pytest.raises(ValueError):
            WeightedTriple.zeros(GRID, times, p, q)
    WeightedTriple.zeros(GRID, times, 3.0, 1.8)


def test_graded_mesh():
    t = graded_mesh(0.5, 64)
    assert t[0] == 0 and t[-1] == 0.5 and len(t) == 65
    np.testing.assert_allclose(t, 0.5 * (np.arange(65) / 64) ** 2)


def test_zero_input_zero_output(params):
    times = graded_mesh(0.05)
    out = phi_map(WeightedTriple.zeros(GRID, times), (Z, Z, Z), 0.05, params)
    assert not (out.u.any() or out.v.any() or out.w.any())
    n = xt_norms(out)
    assert (n.Nu, n.Nv, n.Nw) == (0.0, 0.0, 0.0)


def test_free_part_matches_heat_semigroup(params):
    u0 = gaussian_bump(1.0, 10.0, GRID)
    T = 0.05
    out = phi_map(WeightedTriple.zeros(GRID, graded_mesh(T)), (u0, Z, Z), T, params)
    ref = heat_semigroup(u0, 1.0, 0.0, T, substeps=64).values
    assert np.abs(out.u[-1] - ref).max() <= 1e-6 * u0.values.max()


def test_phi2_phi3_linear_in_partner(params):
    T = 0.05
    times = graded_mesh(T)
    u0 = gaussian_bump(1.0, 10.0, GRID)
    base = phi_map(WeightedTriple.zeros(GRID, times), (u0, u0, u0), T, params)
    tr = WeightedTriple(GRID, times, base.u, base.v, base.w)
    dbl = WeightedTriple(GRID, times, 2 * base.u, base.v, 2 * base.w)
    a = phi_map(tr, (u0, u0, u0), T, params)
    b = phi_map(dbl, (u0, u0, u0), T, params)
    for name in ("v", "w"):
        da = getattr(a, name) - getattr(base, name)
        db = getattr(b, name) - getattr(base, name)
        assert np.abs(db - 2 * da).max() <= 1e-12 * np.abs(da).max()


def test_linear_part_norm_scaling_and_decay(params):
    u0 = gaussian_bump(1.0, 10.0, GRID)
    nus = []
    for T in (0.2, 0.05, 0.0125):
        out = phi_map(WeightedTriple.zeros(GRID, graded_mesh(T, 16)), (u0, Z, Z), T, params)
        nus.append(xt_norms(out).Nu)
        out3 = phi_map(WeightedTriple.zeros(GRID, graded_mesh(T, 16)), (3 * u0, Z, Z), T, params)
        assert xt_norms(out3).Nu == pytest.approx(3 * nus[-1], rel=1e-12)
    assert nus[0] > nus[1] > nus[2] > 0


def test_picard_zero_data(params):
    res = picard_iterate((Z, Z, Z), 0.05, grid=GRID, params=params)
    assert res.converged and res.iterations == 1


def test_picard_contracts_and_matches_imex(params):
    u0 = gaussian_bump(1.0, 10.0, GRID)
    res = picard_iterate((u0, Z, Z), 0.05, grid=GRID, params=params)
    assert res.converged
    assert max(res.ratios) < 0.5
    d = np.array(res.distances)
    assert np.all(np.diff(d) < 0)
    ts = run(u0, Z, Z, params, StepperConfig(dt=1e-4, t_end=0.05, keep_states=True,
                                             snapshot_every=10**9))
    assert rel_l2(GRID, ts.states[-1].u.values, res.fixed_point.u[-1]) <= 1e-2


def test_picard_difference_halves_with_dt(params):
    u0 = gaussian_bump(1.0, 10.0, GRID)
    res = picard_iterate((u0, Z, Z), 0.05, grid=GRID, params=params)
    diffs = []
    for dt in (2e-4, 1e-4):
        ts = run(u0, Z, Z, params, StepperConfig(dt=dt, t_end=0.05, keep_states=True,
                                                 snapshot_every=10**9))
        diffs.append(rel_l2(GRID, ts.states[-1].u.values, res.fixed_point.u[-1]))
    assert 1.5 <= diffs[0] / diffs[1] <= 2.5


def test_picard_signals_non_contraction(params):
    u0 = gaussian_bump(0.4, 5000.0, GRID)
    with pytest.raises(NonContraction):
        picard_iterate((u0, Z, Z), 0.5, k_max=40, grid=GRID, params=params, m=16)
