"""Continuous-time killed random walk kernels.

One source serves both lanes: the functions below are compiled with numba
unless ``FPPLAB_NO_NUMBA=1``, in which case the identical Python code runs
(slower, bit-identical output).  Randomness comes from an in-kernel
SplitMix64 stream seeded per walk, so trajectories do not depend on the lane.

The walk at vertex x jumps to neighbor y at rate a(x,y)/theta(x), is
absorbed at rate exit_rate(x)/theta(x) and killed at rate kill_rate(x)/theta(x);
holding times are exponential with the total rate.
"""

from __future__ import annotations

import math
import os

import numpy as np

_USE_NUMBA = False
if os.environ.get("FPPLAB_NO_NUMBA", "0").lower() not in ("1", "true", "yes"):
    try:
        from numba import njit

        _USE_NUMBA = True
    except ImportError:  # pragma: no cover
        pass

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STRIDE = np.uint64(0xD1342543DE82EF95)


def _sm64(s):
    s = s + _GOLDEN
    z = s
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return s, z


def _uniform(s):
    s, z = _sm64(s)
    return s, (float(z >> np.uint64(11)) + 1.0) * 2.0**-53


_LN2 = 0.6931471805599453
_SQRT_HALF = 0.7071067811865476


def _ln(u):
    """Natural log of u in (0, 1] with a fixed operation order.

    Library log implementations differ by an ulp between the compiled and
    fallback lanes, which would break cross-lane reproducibility of the
    exponential holding times.  frexp plus an atanh series uses only exactly
    rounded primitives, so both lanes produce the same bits.
    """
    m, e = math.frexp(u)
    if m < _SQRT_HALF:
        m = m * 2.0
        e = e - 1
    z = (m - 1.0) / (m + 1.0)
    z2 = z * z
    # atanh series through z^23; |z| <= 0.1716 so the tail is < 1e-18
    s = 1.0 / 23.0
    s = s * z2 + 1.0 / 21.0
    s = s * z2 + 1.0 / 19.0
    s = s * z2 + 1.0 / 17.0
    s = s * z2 + 1.0 / 15.0
    s = s * z2 + 1.0 / 13.0
    s = s * z2 + 1.0 / 11.0
    s = s * z2 + 1.0 / 9.0
    s = s * z2 + 1.0 / 7.0
    s = s * z2 + 1.0 / 5.0
    s = s * z2 + 1.0 / 3.0
    s = s * z2 + 1.0
    return e * _LN2 + 2.0 * z * s


def _occupation_kernel(
    indptr, indices, rates, rate_sum, exit_rate, kill_rate, theta, starts, seed, occ, target, per_walk
):
    n_killed = 0
    n_exited = 0
    n_frozen = 0
    for w in range(starts.shape[0]):
        s = seed + np.uint64(w) * _STRIDE
        s, _ = _sm64(s)
        x = starts[w]
        acc_target = 0.0
        alive = True
        while alive:
            total = rate_sum[x] + exit_rate[x] + kill_rate[x]
            if total <= 0.0:
                n_frozen += 1
                break
            s, u = _uniform(s)
            dt = -_ln(u) * theta[x] / total
            occ[x] += dt
            if target >= 0 and x == target:
                acc_target += dt
            s, u = _uniform(s)
            v = u * total
            if v < rate_sum[x]:
                cum = 0.0
                nxt = x
                for k in range(indptr[x], indptr[x + 1]):
                    cum += rates[k]
                    if v < cum:
                        nxt = indices[k]
                        break
                x = nxt
            elif v < rate_sum[x] + exit_rate[x]:
                n_exited += 1
                alive = False
            else:
                n_killed += 1
                alive = False
        if target >= 0:
            per_walk[w] = acc_target
    return n_killed, n_exited, n_frozen


def _positions_kernel(indptr, indices, rates, rate_sum, exit_rate, kill_rate, theta, starts, seed, horizon, out):
    for w in range(starts.shape[0]):
        s = seed + np.uint64(w) * _STRIDE
        s, _ = _sm64(s)
        x = starts[w]
        t = 0.0
        state = np.int64(x)
        while True:
            total = rate_sum[x] + exit_rate[x] + kill_rate[x]
            if total <= 0.0:
                state = np.int64(x)  # frozen vertex: stays put to the horizon
                break
            s, u = _uniform(s)
            dt = -_ln(u) * theta[x] / total
            if t + dt >= horizon:
                state = np.int64(x)
                break
            t += dt
            s, u = _uniform(s)
            v = u * total
            if v < rate_sum[x]:
                cum = 0.0
                nxt = x
                for k in range(indptr[x], indptr[x + 1]):
                    cum += rates[k]
                    if v < cum:
                        nxt = indices[k]
                        break
                x = nxt
            elif v < rate_sum[x] + exit_rate[x]:
                state = np.int64(-2)  # absorbed at the boundary
                break
            else:
                state = np.int64(-1)  # killed
                break
        out[w] = state


if _USE_NUMBA:
    _sm64 = njit(cache=True, nogil=True)(_sm64)
    _ln = njit(cache=True, nogil=True)(_ln)
    _uniform = njit(cache=True, nogil=True)(_uniform)
    _occupation_kernel = njit(cache=True, nogil=True)(_occupation_kernel)
    _positions_kernel = njit(cache=True, nogil=True)(_positions_kernel)


def _prep(indptr, indices, rates, exit_rate, kill_rate, theta, starts):
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    n = indptr.shape[0] - 1
    rate_sum = np.add.reduceat(
        np.concatenate([rates, [0.0]]), np.minimum(indptr[:-1], rates.size)
    )
    rate_sum[np.diff(indptr) == 0] = 0.0
    exit_rate = np.ascontiguousarray(exit_rate, dtype=np.float64)
    kill_rate = np.ascontiguousarray(kill_rate, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    starts = np.ascontiguousarray(np.atleast_1d(starts), dtype=np.int64)
    if np.any(starts < 0) or np.any(starts >= n):
        raise ValueError("start vertex outside graph")
    return indptr, indices, rates, rate_sum, exit_rate, kill_rate, theta, starts


def occupation_estimate(indptr, indices, rates, exit_rate, kill_rate, theta, starts, seed):
    """Total occupation time per vertex, summed over all walks.

    Returns ``(occupation, n_killed, n_exited, n_frozen)``.
    """
    args = _prep(indptr, indices, rates, exit_rate, kill_rate, theta, starts)
    occ = np.zeros(args[0].shape[0] - 1)
    dummy = np.empty(0)
    with np.errstate(over="ignore"):
        nk, ne, nf = _occupation_kernel(*args, np.uint64(seed), occ, np.int64(-1), dummy)
    return occ, nk, ne, nf


def occupation_samples_at(indptr, indices, rates, exit_rate, kill_rate, theta, starts, seed, target):
    """Per-walk occupation time at ``target`` (one sample per walk)."""
    args = _prep(indptr, indices, rates, exit_rate, kill_rate, theta, starts)
    occ = np.zeros(args[0].shape[0] - 1)
    per_walk = np.zeros(args[7].shape[0])
    with np.errstate(over="ignore"):
        _occupation_kernel(*args, np.uint64(seed), occ, np.int64(target), per_walk)
    return per_walk


def positions_at_time(indptr, indices, rates, exit_rate, kill_rate, theta, starts, seed, horizon):
    """Vertex occupied at time ``horizon`` per walk; -1 if killed, -2 if absorbed."""
    args = _prep(indptr, indices, rates, exit_rate, kill_rate, theta, starts)
    out = np.empty(args[7].shape[0], dtype=np.int64)
    with np.errstate(over="ignore"):
        _positions_kernel(*args, np.uint64(seed), float(horizon), out)
    return out
