"""Jump-OU process parameters and the stopping problem built on top of them.

The process is ``dX = -gamma X dt + sigma dB + dJ`` where ``J`` is compound
Poisson with rate ``lambda`` and Exp(``beta``) jump sizes.  The reward is
``g(x) = max(x, 0)`` and the smooth companion used for the representation is
``g~(x) = x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError

RealFn = Callable[[np.ndarray], np.ndarray]


def reward(x):
    """Positive part ``max(x, 0)``; works on scalars and arrays."""
    return np.maximum(x, 0.0)


def smooth_reward(x):
    """Identity, the smooth reward that agrees with ``reward`` on ``x >= 0``."""
    return x * 1.0


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the jump-driven Ornstein-Uhlenbeck process.

    Attributes
    ----------
    gamma : float
        Mean-reversion rate, > 0.
    sigma : float
        Brownian volatility, >= 0.
    lam : float
        Jump intensity, >= 0.
    beta : float
        Rate of the exponential jump-size law, > 0 (mean jump 1/beta).
    """

    gamma: float
    sigma: float
    lam: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("gamma", "sigma", "lam", "beta"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite real, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.gamma <= 0.0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")
        if self.beta <= 0.0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if self.sigma < 0.0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if self.lam < 0.0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.sigma == 0.0 and self.lam == 0.0:
            raise ParameterError("sigma = 0 and lambda = 0 gives a deterministic process")

    def mean(self, x0: float, t):
        """``E_x[X_t] = (1 - e^{-gamma t}) lambda/(beta gamma) + x e^{-gamma t}``."""
        decay = np.exp(-self.gamma * np.asarray(t, dtype=float))
        return (1.0 - decay) * self.lam / (self.beta * self.gamma) + x0 * decay

    def variance(self, t):
        """Variance of ``X_t``: Brownian part plus the compound-Poisson part."""
        t = np.asarray(t, dtype=float)
        g = self.gamma
        # E[Y^2] = 2/beta^2 for Exp(beta) jumps
        jump = self.lam * (2.0 / self.beta**2) * (1.0 - np.exp(-2.0 * g * t)) / (2.0 * g)
        return self.sigma**2 * (1.0 - np.exp(-2.0 * g * t)) / (2.0 * g) + jump


def excess_function(params: ModelParams, alpha: float, y):
    """``f(y) = (alpha + gamma) y - lambda/beta``, i.e. ``(alpha - A) g~``."""
    return (alpha + params.gamma) * np.asarray(y, dtype=float) - params.lam / params.beta


def excess_root(params: ModelParams, alpha: float) -> float:
    """Unique zero ``lambda / (beta (alpha + gamma))`` of the excess function."""
    return params.lam / (params.beta * (alpha + params.gamma))


_CHECK_POINTS = np.concatenate([-np.logspace(-3, 3, 13), [0.0], np.logspace(-3, 3, 13)])


@dataclass(frozen=True)
class Problem:
    """Discounted stopping problem ``sup_tau E_x[e^{-alpha tau} g(X_tau)]``.

    ``excess`` is the function whose tail integral against the Green kernel
    represents the value.  ``excess_zero`` (its zero) seeds the threshold
    bracket; ``excess_slope`` scales the sign tolerance at the threshold.
    ``params`` is ``None`` for problems posed on a process other than the
    jump-OU one (e.g. the Brownian validation problem).
    """

    alpha: float
    excess: RealFn
    reward: RealFn = reward
    smooth_reward: RealFn = smooth_reward
    params: Optional[ModelParams] = None
    excess_zero: Optional[float] = None
    excess_slope: float = 1.0
    name: str = field(default="problem", compare=False)

    def __post_init__(self) -> None:
        if not math.isfinite(self.alpha) or self.alpha <= 0.0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))
        pts = _CHECK_POINTS
        g = np.asarray(self.reward(pts), dtype=float)
        gs = np.asarray(self.smooth_reward(pts), dtype=float)
        if np.any(g < 0.0):
            raise ParameterError("reward must be non-negative")
        pos = pts >= 0.0
        if not np.allclose(g[pos], gs[pos], rtol=0.0, atol=1e-12):
            raise ParameterError("reward and smooth_reward must agree on x >= 0")

    @classmethod
    def jump_ou(cls, params: ModelParams, alpha: float) -> "Problem":
        """The ``g(x) = x^+`` problem for the jump-OU process."""
        if not math.isfinite(alpha) or alpha <= 0.0:
            raise ParameterError(f"alpha must be > 0, got {alpha}")

        def excess(y, _p=params, _a=float(alpha)):
            return excess_function(_p, _a, y)

        return cls(
            alpha=alpha,
            excess=excess,
            params=params,
            excess_zero=excess_root(params, alpha),
            excess_slope=alpha + params.gamma,
            name="jump-ou",
        )

    @classmethod
    def brownian(cls, alpha: float) -> "Problem":
        """``g(x) = x^+`` for standard Brownian motion: ``f(y) = alpha y``."""
        if not math.isfinite(alpha) or alpha <= 0.0:
            raise ParameterError(f"alpha must be > 0, got {alpha}")
        a = float(alpha)
        return cls(
            alpha=a,
            excess=lambda y: a * np.asarray(y, dtype=float),
            excess_zero=0.0,
            excess_slope=a,
            name="brownian",
        )


EXAMPLE_1 = ModelParams(gamma=1.0, sigma=1.0, lam=1.0, beta=1.0)
EXAMPLE_2 = ModelParams(gamma=1.0, sigma=1.0, lam=0.0, beta=1.0)
