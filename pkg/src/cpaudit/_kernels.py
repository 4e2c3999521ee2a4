"""Hot numeric kernels.

Every kernel has a pure-numpy implementation (``*_np``) and, when numba is
importable, an ``@njit`` twin (``*_nb``). The public names resolve to one of
the two at import time:

    CPAUDIT_NUMBA=0   force the numpy path
    CPAUDIT_NUMBA=1   use numba (default when it imports)

Both paths are bit-identical for the integer kernels (hashing); the float
kernels agree to a few ulps.
"""
import math
import os

import numpy as np
from scipy import special

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("CPAUDIT_NUMBA", "1").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")
BACKEND = "numba" if USE_NUMBA else "numpy"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_CHILD = np.uint64(0xD1B54A32D192ED03)
_SALT = np.uint64(0x6A09E667F3BCC909)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile (rel. error < 1.2e-9).
_A = np.array([-3.969683028665376e+01, 2.209460984245205e+02,
               -2.759285104469687e+02, 1.383577518672690e+02,
               -3.066479806614716e+01, 2.506628277459239e+00])
_B = np.array([-5.447609879822406e+01, 1.615858368580409e+02,
               -1.556989798598866e+02, 6.680131188771972e+01,
               -1.328068155288572e+01])
_C = np.array([-7.784894002430293e-03, -3.223964580411365e-01,
               -2.400758277161838e+00, -2.549732539343734e+00,
               4.374664141464968e+00, 2.938163982698783e+00])
_D = np.array([7.784695709041462e-03, 3.224671290700398e-01,
               2.445134137142996e+00, 3.754408661907416e+00])
_P_LOW = 0.02425


# --------------------------------------------------------------------------
# counter-based hashing


def fmix64_np(z):
    """SplitMix64 finalizer over a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def counter_bits_np(seeds, counters):
    """Output word ``counter`` of the stream keyed by ``seeds``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = seeds + (counters + np.uint64(1)) * GOLDEN
    return fmix64_np(z)


def child_seeds_np(seed, indices):
    """Derive child stream seeds; distinct indices give distinct seeds."""
    base = fmix64_np(np.uint64(seed) ^ _SALT)
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = base ^ (idx * _CHILD + GOLDEN)
    return fmix64_np(z)


def bits_to_unit_np(bits):
    """Top 53 bits to a double in [0, 1)."""
    return (np.asarray(bits, dtype=np.uint64) >> _S11).astype(np.float64) * _TWO53


def bits_to_open_unit_np(bits):
    """Top 52 bits to a double in (0, 1), midpoint-offset; safe for ndtri.

    52 rather than 53 bits so the largest value ``1 - 2**-53`` stays below 1.
    """
    k = (np.asarray(bits, dtype=np.uint64) >> np.uint64(12)).astype(np.float64)
    return (k + 0.5) * (2.0 * _TWO53)


# --------------------------------------------------------------------------
# normal distribution


def ndtr_np(z):
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * special.erfc(-z / SQRT2)


def _acklam_np(u):
    u = np.asarray(u, dtype=np.float64)
    x = np.empty_like(u)
    lo = u < _P_LOW
    hi = u > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = u[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den

    for mask, sign, tail in ((lo, 1.0, u[lo]), (hi, -1.0, 1.0 - u[hi])):
        q = np.sqrt(-2.0 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[mask] = sign * num / den
    return x


def ndtri_np(u):
    """Inverse standard normal CDF: rational start plus one Newton step."""
    u = np.asarray(u, dtype=np.float64)
    x = _acklam_np(u)
    # Newton on Phi(x) - u; the upper tail is done on the complement to keep
    # the residual well resolved near 1.
    upper = x > 0
    resid = np.where(upper, (1.0 - u) - 0.5 * special.erfc(x / SQRT2),
                     0.5 * special.erfc(-x / SQRT2) - u)
    dens = np.exp(-0.5 * x * x) / SQRT2PI
    return x - resid / dens


# --------------------------------------------------------------------------
# pinball loss descent and row variance


def pinball_descent_np(X, y, tau, steps, lr):
    """Full-batch subgradient descent on mean pinball loss.

    ``X`` and ``y`` are expected to be standardized. Returns
    ``(weights, intercept, losses)`` where the parameters are the best iterate
    seen and ``losses[t]`` is the best loss after ``t`` steps.
    """
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    best_w = w.copy()
    best_b = b
    u = y - (X @ w + b)
    best = float(np.mean(u * (tau - (u < 0))))
    losses = np.empty(steps + 1)
    losses[0] = best
    decay = max(1.0, 0.1 * steps)
    for t in range(steps):
        g = (u < 0).astype(np.float64) - tau  # d loss / d prediction
        step = lr / math.sqrt(1.0 + t / decay)
        w = w - step * (X.T @ g) / n
        b = b - step * float(np.mean(g))
        u = y - (X @ w + b)
        loss = float(np.mean(u * (tau - (u < 0))))
        if not math.isfinite(loss):
            losses[t + 1:] = loss
            return best_w, best_b, losses
        if loss < best:
            best = loss
            best_w = w.copy()
            best_b = b
        losses[t + 1] = best
    return best_w, best_b, losses


def row_variance_np(M):
    """Unbiased variance of each row (divisor ``ncols - 1``).

    Rows are shifted by their first entry so a constant row gives exactly 0.
    """
    M = np.asarray(M, dtype=np.float64)
    return np.var(M - M[:, :1], axis=1, ddof=1)


# --------------------------------------------------------------------------
# numba twins

if numba is not None:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def _fmix64_scalar(z):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @_njit
    def _counter_bits_kernel(seeds, counters, out):
        g = np.uint64(0x9E3779B97F4A7C15)
        for i in range(out.size):
            out[i] = _fmix64_scalar(seeds[i] + (counters[i] + np.uint64(1)) * g)

    @_njit
    def _child_seeds_kernel(seed, indices, out):
        base = _fmix64_scalar(seed ^ np.uint64(0x6A09E667F3BCC909))
        g = np.uint64(0x9E3779B97F4A7C15)
        c = np.uint64(0xD1B54A32D192ED03)
        for i in range(out.size):
            out[i] = _fmix64_scalar(base ^ (indices[i] * c + g))

    @_njit
    def _ndtri_scalar(u, a, b, c, d):
        if u < 0.02425:
            q = math.sqrt(-2.0 * math.log(u))
            x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        elif u > 1.0 - 0.02425:
            q = math.sqrt(-2.0 * math.log(1.0 - u))
            x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        else:
            q = u - 0.5
            r = q * q
            x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        if x > 0:
            resid = (1.0 - u) - 0.5 * math.erfc(x / 1.4142135623730951)
        else:
            resid = 0.5 * math.erfc(-x / 1.4142135623730951) - u
        dens = math.exp(-0.5 * x * x) / 2.5066282746310002
        return x - resid / dens

    @_njit
    def _ndtri_kernel(u, out, a, b, c, d):
        for i in range(u.size):
            out[i] = _ndtri_scalar(u[i], a, b, c, d)

    @_njit
    def _ndtr_kernel(z, out):
        for i in range(z.size):
            out[i] = 0.5 * math.erfc(-z[i] / 1.4142135623730951)

    @_njit
    def pinball_descent_nb(X, y, tau, steps, lr):
        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        best_w = w.copy()
        best_b = b
        pred = np.zeros(n)
        g = np.empty(n)
        best = 0.0
        for i in range(n):
            u = y[i]
            best += u * (tau - (1.0 if u < 0 else 0.0))
        best /= n
        losses = np.empty(steps + 1)
        losses[0] = best
        decay = max(1.0, 0.1 * steps)
        for t in range(steps):
            gb = 0.0
            for i in range(n):
                g[i] = (1.0 if y[i] - pred[i] < 0 else 0.0) - tau
                gb += g[i]
            step = lr / math.sqrt(1.0 + t / decay)
            for j in range(d):
                gw = 0.0
                for i in range(n):
                    gw += X[i, j] * g[i]
                w[j] -= step * gw / n
            b -= step * gb / n
            loss = 0.0
            for i in range(n):
                acc = b
                for j in range(d):
                    acc += X[i, j] * w[j]
                pred[i] = acc
                u = y[i] - acc
                loss += u * (tau - (1.0 if u < 0 else 0.0))
            loss /= n
            if not math.isfinite(loss):
                for k in range(t + 1, steps + 1):
                    losses[k] = loss
                return best_w, best_b, losses
            if loss < best:
                best = loss
                best_w[:] = w
                best_b = b
            losses[t + 1] = best
        return best_w, best_b, losses

    @_njit
    def row_variance_nb(M):
        rows, cols = M.shape
        out = np.empty(rows)
        for r in range(rows):
            ref = M[r, 0]
            mean = 0.0
            for c in range(cols):
                mean += M[r, c] - ref
            mean /= cols
            ss = 0.0
            for c in range(cols):
                dv = (M[r, c] - ref) - mean
                ss += dv * dv
            out[r] = ss / (cols - 1)
        return out

    def counter_bits_nb(seeds, counters):
        seeds, counters = np.broadcast_arrays(np.asarray(seeds, dtype=np.uint64),
                                              np.asarray(counters, dtype=np.uint64))
        shape = seeds.shape
        out = np.empty(seeds.size, dtype=np.uint64)
        # broadcast views are read-only; hand the kernel owned copies
        _counter_bits_kernel(seeds.ravel().copy(), counters.ravel().copy(), out)
        return out.reshape(shape)

    def child_seeds_nb(seed, indices):
        idx = np.asarray(indices, dtype=np.uint64)
        out = np.empty(idx.size, dtype=np.uint64)
        _child_seeds_kernel(np.uint64(seed), np.ascontiguousarray(idx).ravel(), out)
        return out.reshape(idx.shape)

    def ndtri_nb(u):
        u = np.asarray(u, dtype=np.float64)
        out = np.empty(u.size)
        _ndtri_kernel(np.ascontiguousarray(u).ravel(), out, _A, _B, _C, _D)
        return out.reshape(u.shape)

    def ndtr_nb(z):
        z = np.asarray(z, dtype=np.float64)
        out = np.empty(z.size)
        _ndtr_kernel(np.ascontiguousarray(z).ravel(), out)
        return out.reshape(z.shape)


if USE_NUMBA:
    counter_bits = counter_bits_nb
    child_seeds = child_seeds_nb
    ndtri = ndtri_nb
    ndtr = ndtr_nb

    def pinball_descent(X, y, tau, steps, lr):
        return pinball_descent_nb(np.ascontiguousarray(X, dtype=np.float64),
                                  np.ascontiguousarray(y, dtype=np.float64),
                                  float(tau), int(steps), float(lr))

    def row_variance(M):
        return row_variance_nb(np.ascontiguousarray(M, dtype=np.float64))
else:
    counter_bits = counter_bits_np
    child_seeds = child_seeds_np
    ndtri = ndtri_np
    ndtr = ndtr_np
    pinball_descent = pinball_descent_np
    row_variance = row_variance_np

bits_to_unit = bits_to_unit_np
bits_to_open_unit = bits_to_open_unit_np
fmix64 = fmix64_np
