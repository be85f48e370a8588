"""Monte Carlo oracle for the jump-OU process.

Every path draws from its own substream ``SeedSequence(seed, spawn_key=(role,
i))``, so estimates are reproducible, independent of the backend, and two
estimates that share ``seed`` and ``role`` use common random numbers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _accel
from ._backend import resolve
from .errors import ParameterError
from .model import ModelParams, Problem

_FIRST_CHUNK = 256
_MAX_CHUNK = 4096
# keeps exp(gamma * chunk_time) well inside float range in the numpy twin
_MAX_GROWTH = 40.0

ROLE_POLICY = 0
ROLE_OCCUPATION = 1


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon_eps: float = 1e-6
    n_paths: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if not 0 < self.horizon_eps < 1:
            raise ParameterError("horizon_eps must lie in (0, 1)")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")

    def horizon(self, alpha: float) -> float:
        """``T = ln(1/eps)/alpha``: discounting beyond T is below ``eps``."""
        return math.log(1.0 / self.horizon_eps) / alpha

    def n_steps(self, alpha: float) -> int:
        return int(math.ceil(self.horizon(alpha) / self.dt))


@dataclass
class PolicyEstimate:
    mean: float
    std_error: float
    n_paths: int
    n_truncated: int = 0
    horizon_bias_bound: float = 0.0
    payoffs: np.ndarray | None = field(default=None, repr=False)
    paths: dict | None = field(default=None, repr=False)

    @property
    def ci95(self) -> tuple:
        return (self.mean - 1.96 * self.std_error, self.mean + 1.96 * self.std_error)

    def to_dict(self, digits: int = 12) -> dict:
        def r(v):
            return float(f"{v:.{digits}g}")

        return {
            "mean": r(self.mean),
            "se": r(self.std_error),
            "n": int(self.n_paths),
            "ci95": [r(v) for v in self.ci95],
            "n_truncated": int(self.n_truncated),
            "horizon_bias_bound": r(self.horizon_bias_bound),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def dump_paths(self, path) -> None:
        if self.paths is None:
            raise ValueError("estimate was computed without record=True")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "tau", "payoff", "crossing_type"])
            names = {0: "immediate", 1: "diffusive", 2: "jump", -1: "none"}
            for i, (tau, pay, kind) in enumerate(zip(self.paths["tau"], self.paths["payoff"], self.paths["kind"])):
                w.writerow([i, f"{tau:.12g}", f"{pay:.12g}", names[int(kind)]])


@dataclass
class CheckResult:
    name: str
    statistic: float
    se: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "statistic": self.statistic, "se": self.se,
                "passed": bool(self.passed), "detail": self.detail}


@dataclass
class GreenRatioResult:
    ratio1: float
    ratio2: float
    se: float
    se1: float
    se2: float
    inconclusive: bool

    @property
    def difference(self) -> float:
        return self.ratio1 - self.ratio2


def path_rng(seed: int, index: int, role: int = ROLE_POLICY) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(role, index))))


def _estimate(values: np.ndarray) -> tuple:
    n = values.shape[0]
    if np.all(values == values[0]):
        # e.g. every path stops at time 0
        return float(values[0]), 0.0
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


# --------------------------------------------------------------------------- #
# Exact transitions
# --------------------------------------------------------------------------- #

def step_exact(params: ModelParams, x, dt: float, rng: np.random.Generator):
    """Exact draw of ``X_dt`` given ``X_0 = x`` (scalar or array).

    Gaussian part with variance ``sigma^2 (1 - e^{-2 gamma dt})/(2 gamma)``
    plus ``sum_i e^{-gamma (dt - T_i)} Y_i`` over Poisson(lam dt) jump times
    ``T_i`` uniform on (0, dt] with Exp(beta) sizes ``Y_i``.
    """
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    x = np.asarray(x, dtype=float)
    g = params.gamma
    out = np.exp(-g * dt) * x
    if params.sigma > 0:
        sd = params.sigma * math.sqrt(-math.expm1(-2.0 * g * dt) / (2.0 * g))
        out = out + sd * rng.standard_normal(x.shape)
    if params.lam > 0:
        counts = rng.poisson(params.lam * dt, size=x.shape)
        total = int(counts.sum())
        if total:
            when = rng.uniform(0.0, dt, total)
            size = rng.exponential(1.0 / params.beta, total)
            contrib = np.exp(-g * (dt - when)) * size
            owner = np.repeat(np.arange(x.size), counts.ravel())
            add = np.bincount(owner, weights=contrib, minlength=x.size).reshape(x.shape)
            out = out + add
    return float(out) if out.ndim == 0 else out


def sample_marginal(params: ModelParams, x0: float, t: float, n: int, seed: int = 0,
                    dt: float | None = None) -> np.ndarray:
    """``n`` independent draws of ``X_t``, chaining ``step_exact`` over steps of ``dt``."""
    rng = np.random.default_rng(seed)
    steps = 1 if dt is None else max(1, int(round(t / dt)))
    h = t / steps
    x = np.full(n, float(x0))
    for _ in range(steps):
        x = step_exact(params, x, h, rng)
    return x


# --------------------------------------------------------------------------- #
# Path events
# --------------------------------------------------------------------------- #

def _chunk_events(rng, params: ModelParams, k0: int, m: int, dt: float):
    """Grid times ``(k0+1..k0+m) dt`` merged with the jump instants in between."""
    grid = dt * np.arange(k0 + 1, k0 + m + 1)
    if params.lam > 0:
        count = rng.poisson(params.lam * m * dt)
        when = np.sort(rng.uniform(k0 * dt, (k0 + m) * dt, count))
        size = rng.exponential(1.0 / params.beta, count)
        pos = np.searchsorted(grid, when)
        times = np.insert(grid, pos, when)
        jumps = np.insert(np.zeros(m), pos, size)
        is_grid = np.insert(np.ones(m, dtype=bool), pos, False)
    else:
        times, jumps, is_grid = grid, np.zeros(m), np.ones(m, dtype=bool)
    normals = rng.standard_normal(times.shape[0]) if params.sigma > 0 else np.zeros(times.shape[0])
    return times, jumps, normals, is_grid


def _chunk_plan(params: ModelParams, n_steps: int, dt: float):
    cap = max(1, min(_MAX_CHUNK, int(_MAX_GROWTH / (params.gamma * dt))))
    m = min(_FIRST_CHUNK, cap)
    k = 0
    while k < n_steps:
        size = min(m, n_steps - k)
        yield k, size
        k += size
        m = min(2 * m, cap)


def first_passage(params: ModelParams, alpha: float, x0: float, thresholds, cfg: SimConfig,
                  backend: str | None = None, role: int = ROLE_POLICY):
    """Entry times of ``[b, inf)`` for every ``b`` in ``thresholds`` along each path.

    Returns ``(tau, state, kind)`` arrays of shape ``(n_paths, len(thresholds))``
    in the caller's threshold order; ``tau = inf`` and ``kind = -1`` mark
    paths that did not enter before the horizon, whose terminal state is
    stored in ``state``.
    """
    backend = resolve(backend)
    b = np.atleast_1d(np.asarray(thresholds, dtype=float))
    order = np.argsort(b, kind="stable")
    bs = np.ascontiguousarray(b[order])
    nb = bs.size
    n = int(cfg.n_paths)
    tau = np.full((n, nb), np.inf)
    state = np.full((n, nb), np.nan)
    kind = np.full((n, nb), -1, dtype=np.int64)
    n_steps = cfg.n_steps(alpha)
    plan = list(_chunk_plan(params, n_steps, cfg.dt))
    g, s = params.gamma, params.sigma
    immediate = int(np.searchsorted(bs, x0, side="right"))
    for i in range(n):
        ht = np.full(nb, np.inf)
        hx = np.full(nb, np.nan)
        hk = np.full(nb, -1, dtype=np.int64)
        ht[:immediate] = 0.0
        hx[:immediate] = x0
        hk[:immediate] = 0
        p = immediate
        x, t = float(x0), 0.0
        if p < nb:
            rng = path_rng(cfg.seed, i, role)
            for k0, m in plan:
                times, jumps, normals, _ = _chunk_events(rng, params, k0, m, cfg.dt)
                x, t, p = _accel.passage_chunk(backend, x, t, times, jumps, normals, g, s, bs, p, ht, hx, hk)
                if p == nb:
                    break
            hx[p:] = x
        tau[i, order] = ht
        state[i, order] = hx
        kind[i, order] = hk
    return tau, state, kind


def estimate_functional(params: ModelParams, alpha: float, x0: float, b: float, payoff: Callable,
                        cfg: SimConfig, backend: str | None = None, record: bool = False) -> PolicyEstimate:
    """``E_x[e^{-alpha tau_b} payoff(X_{tau_b})]`` for ``tau_b`` the entry time of ``[b, inf)``."""
    return _estimates(params, alpha, x0, [b], payoff, cfg, backend, record)[0]


def _estimates(params, alpha, x0, b_list, payoff, cfg, backend, record):
    tau, state, kind = first_passage(params, alpha, x0, b_list, cfg, backend)
    out = []
    for j in range(tau.shape[1]):
        hit = np.isfinite(tau[:, j])
        values = np.zeros(tau.shape[0])
        values[hit] = np.exp(-alpha * tau[hit, j]) * np.asarray(payoff(state[hit, j]), dtype=float)
        mean, se = _estimate(values)
        trunc = ~hit
        bias = cfg.horizon_eps * float(np.max(np.abs(payoff(state[trunc, j])), initial=0.0)) if trunc.any() else 0.0
        est = PolicyEstimate(mean=mean, std_error=se, n_paths=tau.shape[0], n_truncated=int(trunc.sum()),
                             horizon_bias_bound=bias, payoffs=values)
        if record:
            est.paths = {"tau": tau[:, j], "payoff": values, "kind": kind[:, j], "state": state[:, j]}
        out.append(est)
    return out


def estimate_policy_value(problem: Problem, x0: float, b: float, cfg: SimConfig,
                          backend: str | None = None, record: bool = False) -> PolicyEstimate:
    """Discounted reward of the rule "stop on first entry into ``[b, inf)``"."""
    if problem.params is None:
        raise ParameterError("simulation needs a jump-OU problem")
    return estimate_functional(problem.params, problem.alpha, x0, b, problem.reward, cfg, backend, record)


def optimality_scan(problem: Problem, x0: float, b_list: Sequence[float], cfg: SimConfig,
                    backend: str | None = None) -> list:
    """Threshold-rule values for every ``b`` from one set of simulated paths.

    All thresholds are evaluated on the same paths, so paired differences
    (``paired_difference``) have reduced variance.
    """
    if len(b_list) == 0:
        raise ParameterError("b_list must be non-empty")
    if problem.params is None:
        raise ParameterError("simulation needs a jump-OU problem")
    return _estimates(problem.params, problem.alpha, x0, list(b_list), problem.reward, cfg, backend, False)


def paired_difference(a: PolicyEstimate, b: PolicyEstimate) -> tuple:
    """Mean and standard error of ``a - b`` over common paths."""
    if a.payoffs is None or b.payoffs is None or a.payoffs.shape != b.payoffs.shape:
        raise ValueError("paired difference needs per-path payoffs from the same paths")
    return _estimate(a.payoffs - b.payoffs)


def halving_study(problem: Problem, x0: float, b: float, cfg: SimConfig, backend: str | None = None) -> dict:
    """Policy value at ``dt`` and ``dt/2`` to expose the discrete-monitoring bias."""
    from dataclasses import replace

    coarse = estimate_policy_value(problem, x0, b, cfg, backend)
    fine = estimate_policy_value(problem, x0, b, replace(cfg, dt=cfg.dt / 2.0), backend)
    return {"dt": cfg.dt, "coarse": coarse.to_dict(), "fine": fine.to_dict(),
            "difference": fine.mean - coarse.mean,
            "difference_se": math.hypot(coarse.std_error, fine.std_error)}


# --------------------------------------------------------------------------- #
# Occupation times
# --------------------------------------------------------------------------- #

def occupation_times(params: ModelParams, alpha: float, x0s, intervals, cfg: SimConfig,
                     backend: str | None = None) -> np.ndarray:
    """Per-path ``int_0^T e^{-alpha t} 1_H(X_t) dt`` (left-point rule).

    Returns shape ``(n_paths, len(x0s), len(intervals))``.  All start states
    share each path's noise.
    """
    backend = resolve(backend)
    x0s = np.ascontiguousarray(np.atleast_1d(np.asarray(x0s, dtype=float)))
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    lo, hi = np.ascontiguousarray(iv[:, 0]), np.ascontiguousarray(iv[:, 1])
    n = int(cfg.n_paths)
    n_steps = cfg.n_steps(alpha)
    plan = list(_chunk_plan(params, n_steps, cfg.dt))
    out = np.zeros((n, x0s.size, lo.size))
    g, s = params.gamma, params.sigma
    for i in range(n):
        rng = path_rng(cfg.seed, i, ROLE_OCCUPATION)
        acc = np.zeros((x0s.size, lo.size))
        y, t = 0.0, 0.0
        for c, (k0, m) in enumerate(plan):
            times, jumps, normals, is_grid = _chunk_events(rng, params, k0, m, cfg.dt)
            evaluate = is_grid.copy()
            # the chunk's last grid time is evaluated as the next chunk's start
            evaluate[np.flatnonzero(is_grid)[-1]] = False
            y, t = _accel.occupation_chunk(backend, y, t, times, jumps, normals, evaluate, g, s, alpha,
                                           cfg.dt, x0s, lo, hi, acc)
        out[i] = acc
    return out


def green_ratio_check(params: ModelParams, alpha: float, x: float, z: float, sets, cfg: SimConfig,
                      backend: str | None = None) -> GreenRatioResult:
    """Estimate ``G(x, H)/G(z, H)`` for two sets ``H`` below ``z``.

    For a process without negative jumps started above ``z`` the ratio equals
    ``E_x[e^{-alpha h_z}]`` whatever ``H``; the two estimates should agree.
    The standard error of the difference comes from the delta method on the
    joint per-path occupations.
    """
    sets = np.asarray(sets, dtype=float).reshape(-1, 2)
    if sets.shape[0] != 2:
        raise ParameterError("exactly two sets are required")
    if x < z:
        raise ParameterError("x must be >= z")
    if np.any(sets[:, 1] > z) or np.any(sets[:, 0] > sets[:, 1]):
        raise ParameterError("sets must be intervals lying below z")
    occ = occupation_times(params, alpha, [x, z], sets, cfg, backend)
    n = occ.shape[0]
    cols = np.stack([occ[:, 0, 0], occ[:, 0, 1], occ[:, 1, 0], occ[:, 1, 1]], axis=1)
    a1, a2, b1, b2 = cols.mean(axis=0)
    if b1 <= 0 or b2 <= 0:
        return GreenRatioResult(math.nan, math.nan, math.inf, math.inf, math.inf, True)
    cov = np.cov(cols, rowvar=False) / n
    g1 = np.array([1 / b1, 0.0, -a1 / b1**2, 0.0])
    g2 = np.array([0.0, 1 / b2, 0.0, -a2 / b2**2])
    gd = g1 - g2
    se1 = math.sqrt(max(g1 @ cov @ g1, 0.0))
    se2 = math.sqrt(max(g2 @ cov @ g2, 0.0))
    se = math.sqrt(max(gd @ cov @ gd, 0.0))
    # too few visits for the ratio to mean anything
    inconclusive = bool(min(np.count_nonzero(cols[:, 2]), np.count_nonzero(cols[:, 3])) < 30)
    return GreenRatioResult(a1 / b1, a2 / b2, se, se1, se2, inconclusive)
