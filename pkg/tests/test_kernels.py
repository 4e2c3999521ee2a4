import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpaudit import _kernels as K

needs_numba = pytest.mark.skipif(K.numba is None, reason="numba not installed")


def bisect_ndtri(u, tol=1e-13):
    if u > 0.5:
        return -bisect_ndtri(1.0 - u, tol)
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2)) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_backend_flag_matches_env():
    assert K.BACKEND in ("numba", "numpy")
    assert (K.BACKEND == "numba") == K.USE_NUMBA


@pytest.mark.parametrize("u", [1e-10, 1e-6, 0.01, 0.02425, 0.3, 0.5, 0.8, 0.97575, 0.999, 1 - 1e-9])
def test_ndtri_matches_bisection(u):
    assert K.ndtri_np(np.array([u]))[0] == pytest.approx(bisect_ndtri(u), abs=1e-9)


def test_ndtri_round_trip_numpy():
    u = np.linspace(1e-6, 1 - 1e-6, 10_001)
    assert np.max(np.abs(K.ndtr_np(K.ndtri_np(u)) - u)) < 1e-12


def test_counter_bits_stateless():
    a = K.counter_bits_np(np.uint64(5), np.arange(10, dtype=np.uint64))
    b = K.counter_bits_np(np.uint64(5), np.arange(5, 10, dtype=np.uint64))
    assert np.array_equal(a[5:], b)


def test_unit_conversion_ranges():
    bits = np.array([0, 2**64 - 1], dtype=np.uint64)
    u = K.bits_to_unit_np(bits)
    assert u[0] == 0.0 and u[1] < 1.0
    o = K.bits_to_open_unit_np(bits)
    assert 0.0 < o[0] and o[1] < 1.0


def test_row_variance_constant_rows_exact():
    M = np.full((3, 100), 3.7)
    assert np.all(K.row_variance_np(M) == 0.0)
    assert np.all(K.row_variance(M) == 0.0)


def test_row_variance_matches_numpy():
    M = np.random.default_rng(0).normal(size=(5, 40))
    assert np.allclose(K.row_variance_np(M), np.var(M, axis=1, ddof=1))


def test_pinball_descent_loss_log_is_best_so_far():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 2))
    y = X @ [1.0, -1.0] + rng.normal(size=200)
    w, b, losses = K.pinball_descent_np(X, y, 0.9, 300, 0.05)
    assert losses.shape == (301,)
    assert np.all(np.diff(losses) <= 0)
    u = y - (X @ w + b)
    assert np.mean(u * (0.9 - (u < 0))) == pytest.approx(losses[-1])


@needs_numba
def test_hash_parity_across_backends():
    seeds = np.arange(50, dtype=np.uint64) * np.uint64(7919)
    ctr = np.arange(50, dtype=np.uint64)
    assert np.array_equal(K.counter_bits_np(seeds, ctr), K.counter_bits_nb(seeds, ctr))
    assert np.array_equal(K.child_seeds_np(123, ctr), K.child_seeds_nb(123, ctr))


@needs_numba
def test_float_parity_across_backends():
    u = np.linspace(1e-8, 1 - 1e-8, 5001)
    assert np.allclose(K.ndtri_np(u), K.ndtri_nb(u), rtol=1e-13, atol=1e-13)
    z = np.linspace(-8, 8, 1001)
    assert np.allclose(K.ndtr_np(z), K.ndtr_nb(z), rtol=1e-13, atol=1e-300)
    M = np.random.default_rng(2).normal(size=(7, 30))
    assert np.allclose(K.row_variance_np(M), K.row_variance_nb(M), rtol=1e-12)


@needs_numba
def test_pinball_parity_across_backends():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(300, 3))
    y = X @ [0.5, 1.0, -2.0] + rng.standard_t(3, size=300)
    w1, b1, l1 = K.pinball_descent_np(X, y, 0.1, 200, 0.05)
    w2, b2, l2 = K.pinball_descent_nb(X, y, 0.1, 200, 0.05)
    assert np.allclose(w1, w2, atol=1e-9) and b1 == pytest.approx(b2, abs=1e-9)
    assert np.allclose(l1, l2, atol=1e-9)


@given(st.floats(min_value=1e-300, max_value=1.0, exclude_max=True))
def test_ndtri_monotone_neighbourhood(u):
    v = min(u * 1.0001 + 1e-12, np.nextafter(1.0, 0.0))
    x = K.ndtri_np(np.array([u, v]))
    assert x[0] <= x[1]
