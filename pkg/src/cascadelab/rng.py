"""Keyed, counter-based randomness for reproducible tree generation.

Every weight in a cascade is a pure function of (seed, replica, path): a
64-bit key is chained down the tree with a splitmix64-style finalizer, and
the key of a node is mapped to a uniform variate in the open unit interval.
Order of evaluation therefore never matters, which is what makes parallel
generation bit-reproducible.

The inverse normal CDF is the AS241 double-precision rational approximation
(Wichura); against scipy.special.ndtri it agrees to ~1e-15 relative, far
inside the 1e-9 contract.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, uint64, float64

_MASK64 = (1 << 64) - 1

_M1 = uint64(0xBF58476D1CE4E5B9)
_M2 = uint64(0x94D049BB133111EB)
GOLDEN = uint64(0x9E3779B97F4A7C15)

# Stream salts (hex digits of pi), one per independent purpose.
_SEED_SALT = uint64(0x243F6A8885A308D3)
_REPLICA_SALT = uint64(0x13198A2E03707344)
_SAMPLE_SALT = uint64(0xA4093822299F31D0)

# 2**-53; uniforms are ((k >> 11) + 0.5) * 2**-53, strictly inside (0, 1).
_U53 = 1.1102230246251565e-16


@njit(uint64(uint64), inline="always", cache=True)
def _mix64(x):
    x = (x ^ (x >> uint64(30))) * _M1
    x = (x ^ (x >> uint64(27))) * _M2
    return x ^ (x >> uint64(31))


@njit(uint64(uint64, uint64), inline="always", cache=True)
def _child_key(parent, digit):
    return _mix64(parent + (digit + uint64(1)) * GOLDEN)


@njit(float64(uint64), inline="always", cache=True)
def _unit(key):
    return (float64(key >> uint64(11)) + 0.5) * _U53


@njit(uint64(uint64, uint64), cache=True)
def _root_key(seed, replica):
    return _mix64(_mix64(seed + _SEED_SALT) ^ _mix64(replica + _REPLICA_SALT))


@njit(float64(float64), inline="always", cache=True)
def _ndtri(p):
    # AS241 PPND16 (Wichura 1988), |relative error| ~ 1e-15 on (0, 1).
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True, parallel=True)
def _ndtri_array(p):
    out = np.empty(p.size, dtype=np.float64)
    for i in prange(p.size):
        out[i] = _ndtri(p[i])
    return out


def norm_ppf(p):
    """Inverse standard normal CDF, elementwise over an array or scalar."""
    arr = np.asarray(p, dtype=np.float64)
    out = _ndtri_array(arr.ravel()).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def mask64(value: int) -> np.uint64:
    """Clamp an arbitrary Python int to an unsigned 64-bit word."""
    return np.uint64(int(value) & _MASK64)


def root_key(seed: int, replica: int) -> np.uint64:
    """Key of the tree root for one (seed, replica) pair."""
    return np.uint64(_root_key(mask64(seed), mask64(replica)))


def path_key(seed: int, replica: int, digits) -> np.uint64:
    """Key of the node reached by following ``digits`` from the root."""
    key = _root_key(mask64(seed), mask64(replica))
    for d in digits:
        key = _child_key(key, uint64(d))
    return np.uint64(key)


def unit_from_key(key) -> float:
    """Uniform variate in (0, 1) attached to a node key."""
    return float(_unit(uint64(key)))


@njit(cache=True, parallel=True)
def _draw_matrix(base, count, depth):
    # One uniform per (draw t, tree level k), t-major; used by point sampling.
    out = np.empty((count, depth), dtype=np.float64)
    for t in prange(count):
        row = _mix64(base + (uint64(t) + uint64(1)) * GOLDEN)
        for k in range(depth):
            out[t, k] = _unit(_child_key(row, uint64(k)))
    return out


def sample_uniforms(sample_seed: int, count: int, depth: int) -> np.ndarray:
    """(count, depth) matrix of uniforms for measure-distributed sampling."""
    base = _mix64(mask64(sample_seed) + _SAMPLE_SALT)
    return _draw_matrix(uint64(base), count, depth)
