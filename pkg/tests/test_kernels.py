import os
import subprocess
import sys

import numpy as np
import pytest

from doiedwards import kernels
from doiedwards.kernels import _numba_impl, _numpy_impl

needs_numba = pytest.mark.skipif(
    _numba_impl is None, reason="numba backend not importable"
)


@needs_numba
@pytest.mark.parametrize("degree", [2, 8, 16])
def test_legendre_backends_agree(degree):
    rng = np.random.default_rng(degree)
    x = np.sort(rng.uniform(-0.999, 0.999, size=40))
    A_np, dA_np = _numpy_impl.legendre_tables(x, degree)
    A_nb, dA_nb = _numba_impl.legendre_tables(x, degree)
    assert np.allclose(A_np, A_nb, rtol=0.0, atol=1e-13)
    assert np.allclose(dA_np, dA_nb, rtol=0.0, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("n_out", [8, 64, 300])
def test_trig_weight_backends_agree(n_out):
    rng = np.random.default_rng(n_out)
    c = rng.standard_normal(48) / np.arange(1.0, 49.0) ** 2
    W_np = _numpy_impl.trig_weight_matrix(0.3, c, 24, n_out)
    W_nb = _numba_impl.trig_weight_matrix(0.3, c, 24, n_out)
    assert np.allclose(W_np, W_nb, rtol=0.0, atol=1e-14)


def test_dispatch_matches_active_backend():
    x = np.linspace(-0.9, 0.9, 11)
    A, dA = kernels.legendre_tables(x, 4)
    impl = _numba_impl if kernels.active_backend() == "numba" else _numpy_impl
    A_ref, dA_ref = impl.legendre_tables(x, 4)
    assert np.array_equal(A, A_ref)
    assert np.array_equal(dA, dA_ref)


def test_env_flag_forces_numpy_backend():
    env = dict(os.environ, DOIEDWARDS_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c",
         "import doiedwards.kernels as k; print(k.active_backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_legendre_low_order_closed_forms():
    # A[l,m] is the colatitude part of the 4pi-orthonormal real harmonic
    x = np.linspace(-0.95, 0.95, 21)
    sin_t = np.sqrt(1.0 - x**2)
    A, _ = _numpy_impl.legendre_tables(x, 2)
    assert np.allclose(A[:, 0], 0.5 / np.sqrt(np.pi) * np.ones_like(x), atol=1e-15)
    assert np.allclose(A[:, 1], np.sqrt(3.0 / (4 * np.pi)) * x, atol=1e-14)
    assert np.allclose(A[:, 2], np.sqrt(3.0 / (8 * np.pi)) * sin_t, atol=1e-14)
    assert np.allclose(
        A[:, 3], np.sqrt(5.0 / (16 * np.pi)) * (3 * x**2 - 1), atol=1e-13
    )


def test_legendre_theta_derivative_matches_finite_difference():
    theta = np.linspace(0.3, np.pi - 0.3, 15)
    h = 1e-6
    A_p, _ = _numpy_impl.legendre_tables(np.cos(theta + h), 6)
    A_m, _ = _numpy_impl.legendre_tables(np.cos(theta - h), 6)
    _, dA = _numpy_impl.legendre_tables(np.cos(theta), 6)
    fd = (A_p - A_m) / (2 * h)
    assert np.abs(fd - dA).max() < 1e-7


def test_trig_weight_matrix_against_quadrature():
    # W[n,p] should reproduce int H_p(s) profile(s) cos(n pi s) ds / sqrt(2)
    rng = np.random.default_rng(7)
    c = rng.standard_normal(6)
    c0 = 0.4
    s = np.linspace(0.0, 1.0, 20001)
    prof = c0 + sum(cq * np.cos((q + 1) * np.pi * s) for q, cq in enumerate(c))
    W = _numpy_impl.trig_weight_matrix(c0, c, 5, 7)
    for p in range(1, 6):
        for n in range(1, 8):
            integrand = np.sin(p * np.pi * s) * prof * np.cos(n * np.pi * s)
            ref = np.trapezoid(integrand, s)
            assert abs(W[n - 1, p - 1] - ref) < 1e-8
