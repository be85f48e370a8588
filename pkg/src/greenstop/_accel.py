"""Hot loops, each with a numba kernel and a pure-numpy twin.

Both twins consume identical inputs (random draws are made by the caller),
so the backends agree path for path up to floating-point rounding.
"""

from __future__ import annotations

import numpy as np

from ._backend import HAVE_NUMBA, resolve

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not args or not callable(args[0]) else args[0]

# Largest log-scale spread allowed inside one cumulative-sum block.
_LOG_SPAN = 600.0


# --------------------------------------------------------------------------- #
# First-order linear recurrence  out[k+1] = exp(log_r[k]) * out[k] + p[k]
# --------------------------------------------------------------------------- #

@njit(cache=True)
def _recurrence_numba(log_r, p, g0):
    n = log_r.shape[0]
    out = np.empty(n + 1, dtype=np.complex128)
    out[0] = g0
    for k in range(n):
        out[k + 1] = np.exp(log_r[k]) * out[k] + p[k]
    return out


def _recurrence_numpy(log_r, p, g0):
    n = log_r.shape[0]
    out = np.empty(n + 1, dtype=np.complex128)
    out[0] = g0
    s = 0
    while s < n:
        L = np.cumsum(log_r[s:])
        spread = np.maximum.accumulate(np.abs(L.real))
        e = s + max(1, int(np.searchsorted(spread, _LOG_SPAN, side="right")))
        L = L[: e - s]
        acc = out[s] + np.cumsum(p[s:e] * np.exp(-L))
        out[s + 1 : e + 1] = np.exp(L) * acc
        s = e
    return out


def linear_recurrence(log_r, p, g0, backend=None):
    log_r = np.ascontiguousarray(log_r, dtype=np.complex128)
    p = np.ascontiguousarray(p, dtype=np.complex128)
    if resolve(backend) == "numba":
        return _recurrence_numba(log_r, p, complex(g0))
    return _recurrence_numpy(log_r, p, complex(g0))


# --------------------------------------------------------------------------- #
# First passage above a ladder of thresholds
#
# Events are grid times and jump instants, sorted.  Between events the OU
# state moves by its exact Gaussian transition; a jump event then adds the
# jump size.  Thresholds are sorted ascending and ``p`` points at the lowest
# one not yet reached.  Crossing kinds: 1 diffusive, 2 by a jump.
# --------------------------------------------------------------------------- #

@njit(cache=True)
def _passage_numba(x, t, times, jumps, normals, gamma, sigma, thresholds, p, hit_t, hit_x, hit_kind):
    n = times.shape[0]
    nb = thresholds.shape[0]
    c = sigma * sigma / (2.0 * gamma)
    for e in range(n):
        h = times[e] - t
        x = np.exp(-gamma * h) * x + np.sqrt(-c * np.expm1(-2.0 * gamma * h)) * normals[e]
        t = times[e]
        while p < nb and x >= thresholds[p]:
            hit_t[p] = t
            hit_x[p] = x
            hit_kind[p] = 1
            p += 1
        if jumps[e] > 0.0:
            x += jumps[e]
            while p < nb and x >= thresholds[p]:
                hit_t[p] = t
                hit_x[p] = x
                hit_kind[p] = 2
                p += 1
        if p == nb:
            break
    return x, t, p


def _chunk_states(x, t, times, jumps, normals, gamma, sigma):
    """Pre- and post-jump states at every event via the explicit solution."""
    tau = times - t
    h = np.diff(tau, prepend=0.0)
    sd = sigma * np.sqrt(-np.expm1(-2.0 * gamma * h) / (2.0 * gamma))
    grow = np.exp(gamma * tau)
    post = np.exp(-gamma * tau) * (x + np.cumsum((sd * normals + jumps) * grow))
    return post - jumps, post


def _passage_numpy(x, t, times, jumps, normals, gamma, sigma, thresholds, p, hit_t, hit_x, hit_kind):
    n = times.shape[0]
    if n == 0:
        return x, t, p
    pre, post = _chunk_states(x, t, times, jumps, normals, gamma, sigma)
    running = np.maximum.accumulate(post)
    # ascending thresholds are reached in order, so the hits form a prefix
    idx = np.searchsorted(running, thresholds[p:], side="left")
    m = int(np.count_nonzero(idx < n))
    for j in range(m):
        q, k = p + j, idx[j]
        hit_t[q] = times[k]
        if pre[k] >= thresholds[q]:
            hit_x[q], hit_kind[q] = pre[k], 1
        else:
            hit_x[q], hit_kind[q] = post[k], 2
    if p + m == thresholds.shape[0]:
        # like the loop, stop at the event that reached the last threshold
        k = idx[m - 1]
        return post[k], times[k], p + m
    return post[-1], times[-1], p + m


def passage_chunk(backend, x, t, times, jumps, normals, gamma, sigma, thresholds, p, hit_t, hit_x, hit_kind):
    fn = _passage_numba if resolve(backend) == "numba" else _passage_numpy
    return fn(x, t, times, jumps, normals, gamma, sigma, thresholds, p, hit_t, hit_x, hit_kind)


# --------------------------------------------------------------------------- #
# Discounted occupation times
#
# ``y`` is the noise-driven part of the path started at 0; the path from x0
# is ``y + x0 e^{-gamma t}``.  The left-point rule evaluates indicators at the
# chunk start and at every event flagged in ``evaluate``.
# --------------------------------------------------------------------------- #

@njit(cache=True)
def _occupation_numba(y, t, times, jumps, normals, evaluate, gamma, sigma, alpha, dt, x0s, lo, hi, acc):
    c = sigma * sigma / (2.0 * gamma)
    ns = x0s.shape[0]
    nh = lo.shape[0]
    w = np.exp(-alpha * t) * dt
    d = np.exp(-gamma * t)
    for i in range(ns):
        xi = y + x0s[i] * d
        for k in range(nh):
            if lo[k] <= xi <= hi[k]:
                acc[i, k] += w
    for e in range(times.shape[0]):
        h = times[e] - t
        y = np.exp(-gamma * h) * y + np.sqrt(-c * np.expm1(-2.0 * gamma * h)) * normals[e] + jumps[e]
        t = times[e]
        if evaluate[e]:
            w = np.exp(-alpha * t) * dt
            d = np.exp(-gamma * t)
            for i in range(ns):
                xi = y + x0s[i] * d
                for k in range(nh):
                    if lo[k] <= xi <= hi[k]:
                        acc[i, k] += w
    return y, t


def _occupation_numpy(y, t, times, jumps, normals, evaluate, gamma, sigma, alpha, dt, x0s, lo, hi, acc):
    if times.shape[0]:
        _, post = _chunk_states(y, t, times, jumps, normals, gamma, sigma)
        ts = np.concatenate(([t], times[evaluate]))
        ys = np.concatenate(([y], post[evaluate]))
        y_end, t_end = post[-1], times[-1]
    else:
        ts, ys, y_end, t_end = np.array([t]), np.array([y]), y, t
    w = np.exp(-alpha * ts) * dt
    xs = ys[None, :] + x0s[:, None] * np.exp(-gamma * ts)[None, :]
    inside = (xs[:, None, :] >= lo[None, :, None]) & (xs[:, None, :] <= hi[None, :, None])
    acc += inside @ w
    return y_end, t_end


def occupation_chunk(backend, y, t, times, jumps, normals, evaluate, gamma, sigma, alpha, dt, x0s, lo, hi, acc):
    fn = _occupation_numba if resolve(backend) == "numba" else _occupation_numpy
    return fn(y, t, times, jumps, normals, evaluate, gamma, sigma, alpha, dt, x0s, lo, hi, acc)
