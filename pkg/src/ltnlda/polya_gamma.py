"""Polya-Gamma PG(b, c) sampling for integer ``b``.

Draws with ``b`` below a threshold (30 by default) are exact: a sum of ``b``
independent PG(1, c) variates, each from Devroye's alternating-series
accept/reject sampler.  Larger ``b`` uses a single normal draw with the exact
PG mean and variance, truncated to the positive half-line.

All samplers take a :class:`numpy.random.Generator` and are reproducible
given its state.
"""

import math

import numba
import numpy as np

__all__ = ["DEFAULT_THRESHOLD", "pg_mean", "pg_var", "sample_pg", "sample_pg_array"]

DEFAULT_THRESHOLD = 30

_TRUNC = 0.64
_PI2 = math.pi * math.pi


def pg_mean(b, c):
    """Mean of PG(b, c): ``b / (2c) * tanh(c / 2)``, ``b / 4`` at ``c = 0``."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-3
    safe = np.where(small, 1.0, c)
    c2 = c * c
    out = np.where(small, 0.25 - c2 / 48 + c2 * c2 / 480, np.tanh(safe / 2) / (2 * safe))
    return b * out


def pg_var(b, c):
    """Variance of PG(b, c).

    ``b / (4c^3) * sech^2(c/2) * (sinh(c) - c)``, evaluated as
    ``b * (2 tanh(c/2) - c sech^2(c/2)) / (4 c^3)`` to avoid overflow, with a
    series near zero where it tends to ``b / 24``.
    """
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-2
    safe = np.where(small, 1.0, c)
    c2 = c * c
    sech2 = 1.0 / np.cosh(np.minimum(safe / 2, 350.0)) ** 2
    big = (2 * np.tanh(safe / 2) - safe * sech2) / (4 * safe ** 3)
    series = 1 / 24 - c2 / 120 + 17 * c2 * c2 / 13440 - 31 * c2 ** 3 / 181440
    return b * np.where(small, series, big)


# ----------------------------------------------------------------------
# numba kernels
# ----------------------------------------------------------------------


@numba.njit(cache=True)
def _seed(s):
    np.random.seed(s)


@numba.njit(cache=True)
def _norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@numba.njit(cache=True)
def _a_coef(n, x):
    # n-th term of the alternating series for the J*(1, 0) density
    k = n + 0.5
    if x > _TRUNC:
        return math.pi * k * math.exp(-k * k * _PI2 * x / 2.0)
    if x <= 0.0:
        return 0.0
    return math.pi * k * math.exp(-1.5 * math.log(0.5 * math.pi * x) - 2.0 * k * k / x)


@numba.njit(cache=True)
def _truncated_inv_gauss(z):
    # inverse-Gaussian(mean 1/z, shape 1) restricted to (0, _TRUNC)
    t = _TRUNC
    if z == 0.0 or 1.0 / z > t:
        while True:
            while True:
                e1 = np.random.exponential()
                e2 = np.random.exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            x = t / ((1.0 + t * e1) ** 2)
            if np.random.random() <= math.exp(-0.5 * z * z * x):
                return x
    mu = 1.0 / z
    while True:
        y = np.random.standard_normal()
        y = y * y
        x = mu + 0.5 * mu * mu * y - 0.5 * mu * math.sqrt(4.0 * mu * y + (mu * y) ** 2)
        if np.random.random() > mu / (mu + x):
            x = mu * mu / x
        if x <= t:
            return x


@numba.njit(cache=True)
def _pg1(c):
    """One exact PG(1, c) draw."""
    z = 0.5 * abs(c)
    t = _TRUNC
    fz = _PI2 / 8.0 + 0.5 * z * z
    p = 0.5 * math.pi * math.exp(-fz * t) / fz
    sq = math.sqrt(1.0 / t)
    b = sq * (t * z - 1.0)
    a = -sq * (t * z + 1.0)
    q = 2.0 * math.exp(-z) * _norm_cdf(b)
    pa = _norm_cdf(a)
    if pa > 0.0:
        q += 2.0 * math.exp(z + math.log(pa))
    ratio = p / (p + q)
    while True:
        if np.random.random() < ratio:
            x = t + np.random.exponential() / fz
        else:
            x = _truncated_inv_gauss(z)
        s = _a_coef(0, x)
        y = np.random.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _a_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _a_coef(n, x)
                if y > s:
                    break


@numba.njit(cache=True)
def _moments(b, c):
    z = abs(c)
    if z < 1e-2:
        z2 = z * z
        m = b * (0.25 - z2 / 48.0 + z2 * z2 / 480.0)
        v = b * (1.0 / 24.0 - z2 / 120.0 + 17.0 * z2 * z2 / 13440.0 - 31.0 * z2 * z2 * z2 / 181440.0)
        return m, v
    h = 0.5 * z
    m = b * math.tanh(h) / (2.0 * z)
    ch = math.cosh(min(h, 350.0))
    v = b * (2.0 * math.tanh(h) - z / (ch * ch)) / (4.0 * z * z * z)
    return m, v


@numba.njit(cache=True)
def _pg_draw(b, c, threshold):
    if b <= 0:
        return 0.0
    if b < threshold:
        total = 0.0
        for _ in range(b):
            total += _pg1(c)
        return total
    m, v = _moments(float(b), c)
    sd = math.sqrt(v)
    while True:
        x = m + sd * np.random.standard_normal()
        if x > 0.0:
            return x


@numba.njit(cache=True)
def _pg_fill(b, c, threshold, out):
    for i in range(b.shape[0]):
        out[i] = _pg_draw(b[i], c[i], threshold)


def _reseed(rng):
    _seed(int(rng.integers(0, 2**32 - 1)))


def sample_pg_array(b, c, rng, threshold=DEFAULT_THRESHOLD):
    """Independent PG(b[i], c[i]) draws; ``b`` and ``c`` broadcast together."""
    b, c = np.broadcast_arrays(np.asarray(b, dtype=np.int64), np.asarray(c, dtype=float))
    if np.any(b < 0):
        raise ValueError("PG count parameter must be nonnegative")
    if not np.all(np.isfinite(c)):
        raise ValueError("PG tilt parameter must be finite")
    shape = b.shape
    bf = np.ascontiguousarray(b.ravel())
    cf = np.ascontiguousarray(c.ravel())
    out = np.empty(bf.shape[0])
    _reseed(rng)
    _pg_fill(bf, cf, int(threshold), out)
    return out.reshape(shape)


def sample_pg(b, c, rng, threshold=DEFAULT_THRESHOLD, size=None):
    """Draw from PG(b, c).

    With ``size`` given, returns that many iid draws; otherwise a float.
    """
    if size is None:
        return float(sample_pg_array(np.array([b]), np.array([c]), rng, threshold)[0])
    n = int(np.prod(size))
    return sample_pg_array(np.full(n, b), np.full(n, c, dtype=float), rng, threshold).reshape(size)
