"""Green-kernel interface used by the solver, plus two implementations.

``BrownianKernel`` is the closed-form resolvent density of standard Brownian
motion and serves as an analytic validation oracle.  ``GridKernel`` adapts a
``KernelGrid`` and ``FourierGreenKernel`` builds Fourier rows on demand.
"""

from __future__ import annotations

import abc
import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate

from . import _rowquad
from .errors import GridResolutionWarning, ParameterError
from .kernel_fourier import FourierGrid, KernelGrid, build_kernel_grid
from .model import Problem


def _one(y):
    return np.ones_like(np.asarray(y, dtype=float))


class GreenKernel(abc.ABC):
    """``G_alpha(x, dy) = G_alpha(x, y) dy`` for a fixed discount ``alpha``."""

    alpha: float

    @abc.abstractmethod
    def density(self, x: float, y):
        """``G_alpha(x, y)``."""

    @abc.abstractmethod
    def integrate_tail(self, x: float, b: float, f: Callable = _one) -> float:
        """``int_b^inf f(y) G_alpha(x, y) dy``."""

    @abc.abstractmethod
    def integrate_head(self, x: float, b: float, f: Callable = _one) -> float:
        """``int_-inf^b f(y) G_alpha(x, y) dy``."""

    def integrate(self, x: float, f: Callable = _one) -> float:
        return self.integrate_tail(x, -math.inf, f)

    def mass(self, x: float) -> float:
        return self.integrate(x, _one)


def bm_kernel_density(alpha: float, x, y):
    """``exp(-sqrt(2 alpha) |x - y|) / sqrt(2 alpha)``."""
    if alpha <= 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")
    c = math.sqrt(2.0 * alpha)
    return np.exp(-c * np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))) / c


class BrownianKernel(GreenKernel):
    """Resolvent density of standard Brownian motion, integrated with QUADPACK."""

    def __init__(self, alpha: float, epsabs: float = 1e-13, epsrel: float = 1e-12):
        if alpha <= 0:
            raise ParameterError(f"alpha must be > 0, got {alpha}")
        self.alpha = float(alpha)
        self._tol = dict(epsabs=epsabs, epsrel=epsrel, limit=400)

    def density(self, x, y):
        return bm_kernel_density(self.alpha, x, y)

    def _quad(self, x, lo, hi, f):
        if hi <= lo:
            return 0.0

        def h(y):
            return float(f(y)) * float(self.density(x, y))

        # split at the kink so each piece is smooth
        pieces = [(lo, hi)] if not lo < x < hi else [(lo, x), (x, hi)]
        return sum(integrate.quad(h, a, b, **self._tol)[0] for a, b in pieces)

    def integrate_tail(self, x, b, f=_one):
        return self._quad(float(x), float(b), math.inf, f)

    def integrate_head(self, x, b, f=_one):
        return self._quad(float(x), -math.inf, float(b), f)


class GridKernel(GreenKernel):
    """Adapter over a ``KernelGrid``; rows are looked up by exact ``x``.

    Integrals are exact integrals of the piecewise-cubic interpolant of
    ``f * G`` with a break at the kink ``y = x``, so head and tail integrals
    add up to the full row integral for every split point.
    """

    def __init__(self, kg: KernelGrid, tail_tol: float = 1e-6):
        self.alpha = kg.alpha
        self.kg = kg
        self.tail_tol = tail_tol
        self._index = {float(x): i for i, x in enumerate(kg.x_values)}
        self.tail_excess = _check_tails(kg, tail_tol)

    def _row(self, x: float):
        try:
            i = self._index[float(x)]
        except KeyError:
            raise KeyError(f"no kernel row at x={x!r}; rows are not interpolated in x") from None
        return self.kg.y_values[i], self.kg.density[i], self.kg.kink_index

    def density(self, x, y):
        ys, d, k0 = self._row(x)
        return _rowquad.evaluate(ys, d, k0, y)

    def _integral(self, x, lo, hi, f):
        ys, d, k0 = self._row(x)
        if lo >= ys[-1]:
            warnings.warn(f"lower limit {lo:g} beyond y_max={ys[-1]:g}; empty tail", GridResolutionWarning,
                          stacklevel=3)
            return 0.0
        return _rowquad.integral(ys, d * f(ys), k0, lo, hi)

    def integrate_tail(self, x, b, f=_one):
        return self._integral(x, float(b), math.inf, f)

    def integrate_head(self, x, b, f=_one):
        return self._integral(x, -math.inf, float(b), f)


def _tail_estimate(d: np.ndarray, dy: float, block: int = 8) -> float:
    """Mass beyond both grid ends.

    Sums of the outermost two blocks of cells give a geometric decay ratio
    ``r``; the mass beyond is ``S r/(1 - r)``.  A flat or rising edge (noise
    floor) is charged one block.
    """
    total = 0.0
    for edge in (d[::-1], d):
        s1 = float(edge[:block].sum()) * dy
        s2 = float(edge[block : 2 * block].sum()) * dy
        if s1 <= 0.0:
            continue
        r = s1 / s2 if s2 > 0.0 else 1.0
        total += s1 * (r / (1.0 - r) if r < 0.5 else 1.0)
    return total


def _check_tails(kg: KernelGrid, tail_tol: float) -> np.ndarray:
    excess = np.array([_tail_estimate(row, kg.dy) for row in kg.density])
    bad = excess > tail_tol * np.abs(kg.mass)
    if bad.any():
        warnings.warn(
            f"{int(bad.sum())} kernel row(s) carry more than tail_tol={tail_tol:g} of their mass "
            "beyond the y-grid; tail integrals are truncated",
            GridResolutionWarning,
            stacklevel=3,
        )
    return excess


def grid_kernel_adapter(kg: KernelGrid, tail_tol: float = 1e-6) -> GridKernel:
    return GridKernel(kg, tail_tol=tail_tol)


class FourierGreenKernel(GridKernel):
    """Jump-OU kernel whose rows are built, on first request, at the exact ``x``."""

    def __init__(self, problem: Problem, grid: FourierGrid | None = None, backend: str | None = None,
                 tail_tol: float = 1e-6):
        if problem.params is None:
            raise ParameterError("FourierGreenKernel needs a jump-OU problem")
        self.alpha = problem.alpha
        self.problem = problem
        self.grid = grid or FourierGrid()
        self.backend = backend
        self.tail_tol = tail_tol
        self._rows: dict[float, tuple] = {}

    def _row(self, x: float):
        x = float(x)
        row = self._rows.get(x)
        if row is None:
            kg = build_kernel_grid(self.problem, self.grid, [x], backend=self.backend)
            _check_tails(kg, self.tail_tol)
            row = (kg.y_values[0], kg.density[0], kg.kink_index)
            self._rows[x] = row
        return row

    def kernel_grid(self, x_values, workers: int = 1) -> KernelGrid:
        return build_kernel_grid(self.problem, self.grid, x_values, backend=self.backend, workers=workers)
