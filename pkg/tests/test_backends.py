import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemo4d._backend import BACKEND, get_kernels
from chemo4d.core import build_grid

py = get_kernels("python")
try:
    cy = get_kernels("cython")
except ImportError:  # extension not built
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def test_active_backend_name():
    assert BACKEND in ("cython", "python")


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_kernels("fortran")


def _system(n, rng):
    off = -rng.uniform(0.1, 1.0, n - 1)
    diag = np.abs(rng.normal(size=n)) + 2.5
    return off, diag, rng.normal(size=n)


@settings(max_examples=30, deadline=None)
@given(st.integers(16, 400), st.integers(0, 2**32 - 1))
def test_tridiag_python_matches_dense(n, seed):
    off, diag, rhs = _system(n, np.random.default_rng(seed))
    A = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    np.testing.assert_allclose(py.tridiag_solve(off, diag, off, rhs), np.linalg.solve(A, rhs),
                               rtol=1e-10, atol=1e-12)


@needs_cython
@settings(max_examples=30, deadline=None)
@given(st.integers(16, 400), st.integers(0, 2**32 - 1))
def test_tridiag_backends_agree(n, seed):
    off, diag, rhs = _system(n, np.random.default_rng(seed))
    np.testing.assert_allclose(cy.tridiag_solve(off, diag, off, rhs),
                               py.tridiag_solve(off, diag, off, rhs), rtol=1e-12, atol=1e-14)


@needs_cython
@pytest.mark.parametrize("upwind", [True, False])
def test_flux_backends_agree(upwind):
    g = build_grid(20.0, 300)
    rng = np.random.default_rng(1)
    u = np.abs(rng.normal(size=g.n))
    v = rng.normal(size=g.n)
    a = np.asarray(cy.advective_flux(u, v, g.areas, 1 / g.h, upwind))
    b = py.advective_flux(u, v, g.areas, 1 / g.h, upwind)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)


@needs_cython
def test_cn_backends_agree():
    g = build_grid(20.0, 300)
    f = np.exp(-g.nodes**2)
    args = (g.k_off, g.k_diag, g.weights, 1e-4, f, 25, 0.999)
    np.testing.assert_allclose(np.asarray(cy.cn_propagate(*args)), py.cn_propagate(*args),
                               rtol=1e-11, atol=1e-15)
