"""Quadrature on one kernel row.

A row is sampled on a uniform grid with the kink of the density (the source
state) on node ``k0``.  Each side of the kink is represented by a not-a-knot
cubic spline and every integral is the exact integral of that piecewise
cubic, so splitting an interval at any point is additive.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline


def splines(y: np.ndarray, h: np.ndarray, k0: int):
    left = CubicSpline(y[: k0 + 1], h[: k0 + 1]) if k0 >= 1 else None
    right = CubicSpline(y[k0:], h[k0:]) if k0 < y.shape[0] - 1 else None
    return left, right


def integral(y: np.ndarray, h: np.ndarray, k0: int, lo: float = -np.inf, hi: float = np.inf) -> float:
    """``int_lo^hi`` of the piecewise-cubic interpolant of ``h``, clipped to the grid."""
    lo = max(lo, y[0])
    hi = min(hi, y[-1])
    if hi <= lo:
        return 0.0
    total = 0.0
    for sp, a, b in zip(splines(y, h, k0), (y[0], y[k0]), (y[k0], y[-1])):
        if sp is None:
            continue
        s, e = max(lo, a), min(hi, b)
        if e > s:
            total += float(sp.integrate(s, e))
    return total


def evaluate(y: np.ndarray, h: np.ndarray, k0: int, at) -> np.ndarray:
    at = np.asarray(at, dtype=float)
    left, right = splines(y, h, k0)
    out = np.zeros_like(at)
    inside = (at >= y[0]) & (at <= y[-1])
    lmask = inside & (at < y[k0])
    rmask = inside & ~lmask
    if left is not None and lmask.any():
        out[lmask] = left(at[lmask])
    if right is not None and rmask.any():
        out[rmask] = right(at[rmask])
    return out
