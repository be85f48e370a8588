"""Threshold root equation, value function and verification of the hypotheses.

For a right-sided problem the threshold ``x*`` solves

    g~(x*) = int_{x*}^inf f(y) G_alpha(x*, dy)

and the value is ``V(x) = int_{x*}^inf f(y) G_alpha(x, dy)``.  The result is
accepted when ``f >= 0`` above ``x*``, ``V >= g`` below ``x*`` and the full
resolvent identity ``int f G(x, dy) = g~(x)`` holds on a check grid.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NoThresholdError, ParameterError
from .kernel_oracle import GreenKernel
from .model import Problem


@dataclass(frozen=True)
class SolveConfig:
    bracket_lo: float | None = None
    bracket_hi: float | None = None
    root_tol: float = 1e-6
    check_grid: tuple | None = None
    majorant_tol: float = 1e-2
    identity_tol: float = 1e-2
    max_expand: int = 20
    n_scan: int = 64

    def __post_init__(self) -> None:
        if not self.root_tol > 0:
            raise ParameterError("root_tol must be > 0")
        if self.n_scan < 2:
            raise ParameterError("n_scan must be >= 2")
        if self.bracket_lo is not None and self.bracket_hi is not None and self.bracket_hi <= self.bracket_lo:
            raise ParameterError("bracket_hi must exceed bracket_lo")
        if self.check_grid is not None:
            object.__setattr__(self, "check_grid", tuple(float(v) for v in self.check_grid))


@dataclass
class SolveReport:
    threshold: float
    residual_at_threshold: float
    residual_bound: float
    bracket: tuple
    all_sign_changes: list
    multiple_roots: bool = False
    f_nonneg_ok: bool | None = None
    majorant_ok: bool | None = None
    identity_ok: bool | None = None
    # the root equation holds by construction, the reward match by the Problem invariant
    root_equation_ok: bool = True
    reward_match_ok: bool = True
    value_samples: list = field(default_factory=list)
    identity_errors: list = field(default_factory=list)
    stopping_gap: float | None = None
    min_majorant_margin: float | None = None

    @property
    def flags(self) -> dict:
        return {
            "f_nonneg": self.f_nonneg_ok,
            "majorant": self.majorant_ok,
            "identity": self.identity_ok,
            "root_equation": self.root_equation_ok,
            "reward_match": self.reward_match_ok,
            "unique_root": not self.multiple_roots,
        }

    @property
    def verified(self) -> bool:
        f = self.flags
        return all(f[k] is True for k in ("f_nonneg", "majorant", "identity", "root_equation", "reward_match"))

    @property
    def status(self) -> str:
        return "VERIFIED" if self.verified else "NOT-VERIFIED"

    def to_dict(self, digits: int = 12) -> dict:
        def r(v):
            return None if v is None else float(f"{v:.{digits}g}")

        return {
            "threshold": r(self.threshold),
            "residual": r(self.residual_at_threshold),
            "residual_bound": r(self.residual_bound),
            "bracket": [r(v) for v in self.bracket],
            "status": self.status,
            "flags": self.flags,
            "sign_changes": [[r(a), r(b)] for a, b in self.all_sign_changes],
            "value_samples": [[r(x), r(v)] for x, v in self.value_samples],
            "identity_errors": [[r(x), r(e)] for x, e in self.identity_errors],
            "stopping_gap": r(self.stopping_gap),
            "min_majorant_margin": r(self.min_majorant_margin),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)


def threshold_residual(problem: Problem, kernel: GreenKernel, b: float) -> float:
    """``g~(b) - int_b^inf f(y) G(b, y) dy``; zero at the threshold."""
    b = float(b)
    return float(problem.smooth_reward(b)) - kernel.integrate_tail(b, b, problem.excess)


def value_function(problem: Problem, kernel: GreenKernel, threshold: float, x):
    """``V(x) = int_{x*}^inf f(y) G(x, y) dy``; scalar or array ``x``."""
    xs = np.asarray(x, dtype=float)
    vals = np.array([kernel.integrate_tail(float(v), threshold, problem.excess) for v in xs.ravel()])
    return float(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)


def _bisect(fun, a, b, fa, fb, tol):
    while b - a >= tol:
        m = 0.5 * (a + b)
        fm = fun(m)
        if fm == 0.0:
            return m, m, fm, fm
        if (fm < 0.0) == (fa < 0.0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return a, b, fa, fb


def solve_threshold(problem: Problem, kernel: GreenKernel, cfg: SolveConfig = SolveConfig()) -> SolveReport:
    """Locate the threshold by bracketing, scanning and bisection.

    The bracket starts at the zero of the excess function (below it the
    threshold cannot satisfy ``f >= 0``) and its width doubles until the
    residual changes sign.  All sign changes on a 64-point scan are recorded;
    the leftmost admissible one is refined.
    """
    lo = cfg.bracket_lo if cfg.bracket_lo is not None else problem.excess_zero
    if lo is None:
        raise ParameterError("bracket_lo is required when the problem has no known excess zero")

    def res(b):
        return threshold_residual(problem, kernel, b)

    r_lo = res(lo)
    width = (cfg.bracket_hi - lo) if cfg.bracket_hi is not None else max(1.0, abs(lo))
    for _ in range(cfg.max_expand + 1):
        hi = lo + width
        r_hi = res(hi)
        if r_lo == 0.0 or (r_hi < 0.0) != (r_lo < 0.0):
            break
        width *= 2.0
    else:
        raise NoThresholdError(
            f"residual keeps the sign of {r_lo:+.3g} on [{lo:g}, {hi:g}]; the problem may not be "
            "right-sided for these parameters"
        )

    pts = np.linspace(lo, hi, cfg.n_scan)
    vals = np.array([r_lo] + [res(b) for b in pts[1:-1]] + [r_hi])
    changes = []
    for i in range(cfg.n_scan - 1):
        if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0.0:
            changes.append((float(pts[i]), float(pts[i + 1]), float(vals[i]), float(vals[i + 1])))
    if vals[-1] == 0.0:
        changes.append((float(pts[-1]), float(pts[-1]), 0.0, 0.0))

    slope_tol = cfg.root_tol * abs(problem.excess_slope)
    for a, b, fa, fb in changes:
        if fa == 0.0:
            a2, b2, fa2, fb2 = a, a, fa, fa
        else:
            a2, b2, fa2, fb2 = _bisect(res, a, b, fa, fb, cfg.root_tol)
        root = 0.5 * (a2 + b2)
        if float(problem.excess(root)) >= -slope_tol:
            break
    else:
        raise NoThresholdError("no sign change with a non-negative excess function at the root")

    multiple = len(changes) > 1
    if multiple:
        warnings.warn(f"residual changes sign {len(changes)} times; using the leftmost admissible root",
                      RuntimeWarning, stacklevel=2)
    return SolveReport(
        threshold=root,
        residual_at_threshold=res(root),
        residual_bound=max(abs(fa2), abs(fb2)),
        bracket=(a2, b2),
        all_sign_changes=[(a, b) for a, b, _, _ in changes],
        multiple_roots=multiple,
    )


def default_check_grid(threshold: float) -> np.ndarray:
    return np.linspace(threshold - 3.0, threshold + 2.0, 51)


def verify_hypotheses(problem: Problem, kernel: GreenKernel, threshold: float,
                      cfg: SolveConfig = SolveConfig(), report: SolveReport | None = None) -> SolveReport:
    """Numerical check of the sufficient conditions at ``threshold``.

    Failures are recorded as flags on the report, never raised.
    """
    if report is None:
        r = threshold_residual(problem, kernel, threshold)
        report = SolveReport(threshold=threshold, residual_at_threshold=r, residual_bound=abs(r),
                             bracket=(threshold, threshold), all_sign_changes=[])
    grid = np.asarray(cfg.check_grid if cfg.check_grid is not None else default_check_grid(threshold))

    report.f_nonneg_ok = bool(float(problem.excess(threshold)) >= -cfg.root_tol * abs(problem.excess_slope))

    v = value_function(problem, kernel, threshold, grid)
    g = np.asarray(problem.reward(grid), dtype=float)
    below = grid <= threshold
    margin = v[below] - g[below]
    report.majorant_ok = bool(np.all(margin >= -cfg.majorant_tol))
    report.min_majorant_margin = float(margin.min()) if margin.size else None
    above = ~below
    report.stopping_gap = float(np.max(np.abs(v[above] - g[above]))) if above.any() else None

    full = np.array([kernel.integrate(float(x), problem.excess) for x in grid])
    ident = np.abs(full - np.asarray(problem.smooth_reward(grid), dtype=float))
    report.identity_ok = bool(np.all(ident < cfg.identity_tol))
    report.identity_errors = [(float(x), float(e)) for x, e in zip(grid, ident)]
    report.value_samples = [(float(x), float(y)) for x, y in zip(grid, v)]
    return report


def solve(problem: Problem, kernel: GreenKernel, cfg: SolveConfig = SolveConfig()) -> SolveReport:
    """``solve_threshold`` followed by ``verify_hypotheses``."""
    rep = solve_threshold(problem, kernel, cfg)
    return verify_hypotheses(problem, kernel, rep.threshold, cfg, rep)


def harmonicity_check(problem: Problem, kernel: GreenKernel, threshold: float, x: float, sim_cfg,
                      n_table: int = 41, table_width: float = 4.0, backend: str | None = None):
    """Compare ``V(x)`` with a Monte Carlo estimate of ``E_x[e^{-alpha h} V(X_h)]``.

    ``h`` is the entry time of ``[threshold, inf)``.  ``V`` on the stopping
    side is tabulated from the kernel on ``[threshold, threshold + width]``
    and taken equal to ``g~`` above the table.
    """
    from .montecarlo import CheckResult, estimate_functional

    if problem.params is None:
        raise ParameterError("harmonicity_check simulates the jump-OU process; params required")
    if x > threshold:
        raise ParameterError("x must lie in the continuation region (x <= threshold)")
    table_x = threshold + np.linspace(0.0, table_width, n_table)
    table_v = value_function(problem, kernel, threshold, table_x)

    def v_stop(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= table_x[-1], np.interp(s, table_x, table_v), problem.smooth_reward(s))

    v_x = value_function(problem, kernel, threshold, x)
    est = estimate_functional(problem.params, problem.alpha, x, threshold, v_stop, sim_cfg, backend=backend)
    gap = abs(v_x - est.mean)
    return CheckResult(name="harmonicity", statistic=gap, se=est.std_error, passed=gap <= 3.0 * est.std_error
                       or gap == 0.0, detail={"V": v_x, "mc": est.to_dict()})
