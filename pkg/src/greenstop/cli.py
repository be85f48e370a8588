"""Command line front end: ``greenstop {solve,kernel,simulate,verify} --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 no threshold or kernel
tolerance failure, 4 verification failure (outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from .errors import GridResolutionError, NoThresholdError, ParameterError
from .kernel_fourier import FourierGrid
from .kernel_oracle import FourierGreenKernel
from .model import ModelParams, Problem
from .solver import SolveConfig, harmonicity_check, solve, value_function

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_THRESHOLD = 3
EXIT_VERIFY = 4

CSV_VERSION = 1
DIGITS = 12

_SECTIONS = {
    "problem": {"gamma", "sigma", "lambda", "beta", "alpha"},
    "kernel": {"n_z", "z_max", "quad_tol", "mass_tol", "identity_tol", "clip_tol", "tail_tol", "x_values"},
    "solver": {"root_tol", "check_grid", "plot_grid", "bracket_lo", "bracket_hi", "majorant_tol", "identity_tol"},
    "sim": {"dt", "horizon_eps", "n_paths", "seed", "threshold", "x0", "record_paths", "halving",
            "ratio_x", "ratio_z", "ratio_sets", "scan_offset", "law_times", "law_x0"},
    "out": {"dir"},
}
_REQUIRED_PROBLEM = ("gamma", "sigma", "lambda", "beta", "alpha")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    problem: Problem
    grid: FourierGrid
    solver: SolveConfig
    sim: mc.SimConfig
    kernel_x: tuple
    plot_grid: tuple
    sim_extra: dict = field(default_factory=dict)
    out_dir: Path = Path("out")


def _grid_spec(spec, name):
    """A grid is either an explicit list or ``{"lo", "hi", "n"}``."""
    if isinstance(spec, dict):
        if set(spec) != {"lo", "hi", "n"}:
            raise ConfigError(f"{name} needs exactly the keys lo, hi, n")
        n = spec["n"]
        if not isinstance(n, int) or n < 2 or not spec["hi"] > spec["lo"]:
            raise ConfigError(f"{name}: need integer n >= 2 and hi > lo")
        return tuple(np.linspace(float(spec["lo"]), float(spec["hi"]), n).tolist())
    if isinstance(spec, list) and spec and all(isinstance(v, (int, float)) for v in spec):
        return tuple(float(v) for v in spec)
    raise ConfigError(f"{name} must be a non-empty list of numbers or an object with lo, hi, n")


def load_config(path, seed=None, out=None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for name, allowed in _SECTIONS.items():
        sec = raw.setdefault(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section '{name}' must be an object")
        bad = set(sec) - allowed
        if bad:
            raise ConfigError(f"unknown keys in '{name}': {sorted(bad)}")
    p = raw["problem"]
    missing = [k for k in _REQUIRED_PROBLEM if k not in p]
    if missing:
        raise ConfigError(f"problem section is missing {missing}")
    k, s, m = raw["kernel"], raw["solver"], raw["sim"]
    try:
        params = ModelParams(gamma=p["gamma"], sigma=p["sigma"], lam=p["lambda"], beta=p["beta"])
        problem = Problem.jump_ou(params, p["alpha"])
        grid = FourierGrid(**{key: k[key] for key in k if key != "x_values"})
        check = _grid_spec(s["check_grid"], "solver.check_grid") if "check_grid" in s else None
        solver = SolveConfig(check_grid=check, **{key: s[key] for key in s if key not in ("check_grid", "plot_grid")})
        sim_keys = ("dt", "horizon_eps", "n_paths", "seed")
        sim_args = {key: m[key] for key in sim_keys if key in m}
        if seed is not None:
            sim_args["seed"] = seed
        sim = mc.SimConfig(**sim_args)
    except (ParameterError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    kernel_x = _grid_spec(k.get("x_values", {"lo": -2.0, "hi": 3.0, "n": 21}), "kernel.x_values")
    plot = _grid_spec(s.get("plot_grid", {"lo": -2.0, "hi": 3.0, "n": 101}), "solver.plot_grid")
    extra = {key: m[key] for key in m if key not in sim_keys}
    if "x0" in extra:
        extra["x0"] = _grid_spec(extra["x0"], "sim.x0")
    out_dir = Path(out if out is not None else raw["out"].get("dir", "out"))
    return RunConfig(problem, grid, solver, sim, kernel_x, plot, extra, out_dir)


def _r(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None if v is None else str(v)
    return float(f"{float(v):.{DIGITS}g}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(v: float) -> str:
    return f"{v:.{DIGITS}g}"


def _workers(threads: int) -> int:
    if threads == 0:
        return os.cpu_count() or 1
    return max(1, threads)


def _problem_dict(pr: Problem) -> dict:
    q = pr.params
    return {"gamma": q.gamma, "sigma": q.sigma, "lambda": q.lam, "beta": q.beta, "alpha": pr.alpha}


def _threshold(cfg: RunConfig) -> float:
    if "threshold" in cfg.sim_extra:
        return float(cfg.sim_extra["threshold"])
    report = cfg.out_dir / "report.json"
    if not report.exists():
        raise ConfigError(f"no sim.threshold in config and no {report}; run 'solve' first")
    try:
        return float(json.loads(report.read_text())["threshold"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read threshold from {report}: {exc}") from None


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def cmd_solve(cfg: RunConfig, threads: int = 1) -> int:
    kernel = FourierGreenKernel(cfg.problem, cfg.grid)
    report = solve(cfg.problem, kernel, cfg.solver)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict(DIGITS)
    doc["problem"] = _problem_dict(cfg.problem)
    _write_json(cfg.out_dir / "report.json", doc)

    xs = np.asarray(cfg.plot_grid)
    v = value_function(cfg.problem, kernel, report.threshold, xs)
    g = cfg.problem.reward(xs)
    with open(cfg.out_dir / "value_function.csv", "w") as fh:
        fh.write(f"# greenstop value_function v{CSV_VERSION} threshold={_fmt(report.threshold)} "
                 f"alpha={_fmt(cfg.problem.alpha)}\n")
        fh.write("x,V,g\n")
        for a, b, c in zip(xs, v, g):
            fh.write(f"{_fmt(a)},{_fmt(b)},{_fmt(c)}\n")
    print(f"threshold {report.threshold:.6f} residual {report.residual_at_threshold:.2e} status {report.status}")
    return EXIT_OK if report.verified else EXIT_VERIFY


def cmd_kernel(cfg: RunConfig, threads: int = 1) -> int:
    kernel = FourierGreenKernel(cfg.problem, cfg.grid)
    kg = kernel.kernel_grid(cfg.kernel_x, workers=_workers(threads))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    kg.to_csv(cfg.out_dir / "kernel.csv")
    kg.save(cfg.out_dir / "kernel.bin")
    mass_err = kg.mass_error()
    ident = kg.identity_error(cfg.problem.smooth_reward)
    for x, m, e in zip(kg.x_values, kg.mass, ident):
        print(f"x={x:+.4f} mass={m:.8f} identity_error={e:.2e}")
    print(f"max mass error {mass_err.max():.2e}, max identity error {ident.max():.2e}")
    if ident.max() >= cfg.grid.identity_tol:
        print(f"identity error exceeds identity_tol={cfg.grid.identity_tol:g}", file=sys.stderr)
        return EXIT_NO_THRESHOLD
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, threads: int = 1) -> int:
    b = _threshold(cfg)
    x0s = cfg.sim_extra.get("x0", (0.0,))
    record = bool(cfg.sim_extra.get("record_paths", False))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, x0 in enumerate(x0s):
        est = mc.estimate_policy_value(cfg.problem, x0, b, cfg.sim, record=record)
        rows.append({"x0": _r(x0), **est.to_dict(DIGITS)})
        if record:
            est.dump_paths(cfg.out_dir / f"paths_{i}.csv")
        print(f"x0={x0:+.4f} value {est.mean:.6f} se {est.std_error:.2e}")
    doc = {"threshold": _r(b), "dt": _r(cfg.sim.dt), "seed": int(cfg.sim.seed), "estimates": rows}
    if cfg.sim_extra.get("halving", False):
        doc["halving"] = [{"x0": _r(x0), **_rounded(mc.halving_study(cfg.problem, x0, b, cfg.sim))}
                          for x0 in x0s]
    _write_json(cfg.out_dir / "estimate.json", doc)
    return EXIT_OK


def _rounded(obj):
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _r(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check(name, statistic, se, passed, **detail) -> dict:
    return _rounded({"name": name, "statistic": statistic, "se": se, "passed": bool(passed), "detail": detail})


def cmd_verify(cfg: RunConfig, threads: int = 1) -> int:
    report = cfg.out_dir / "report.json"
    if not report.exists():
        raise ConfigError(f"verify needs {report}; run 'solve' first")
    b = _threshold(cfg) if "threshold" in cfg.sim_extra else float(json.loads(report.read_text())["threshold"])
    pr, sim, extra = cfg.problem, cfg.sim, cfg.sim_extra
    kernel = FourierGreenKernel(pr, cfg.grid)
    checks = []

    x, z = float(extra.get("ratio_x", 1.0)), float(extra.get("ratio_z", 0.0))
    sets = extra.get("ratio_sets", [[z - 1.0, z - 0.5], [z - 2.0, z - 1.5]])
    gr = mc.green_ratio_check(pr.params, pr.alpha, x, z, sets, sim)
    checks.append(_check("green_ratio", abs(gr.difference), gr.se,
                         (not gr.inconclusive) and abs(gr.difference) <= 3.0 * gr.se,
                         ratio1=gr.ratio1, ratio2=gr.ratio2, inconclusive=gr.inconclusive))

    for x0 in extra.get("x0", (0.0,)):
        if x0 > b:
            continue
        hc = harmonicity_check(pr, kernel, b, x0, sim)
        checks.append(_check(f"harmonicity_x0={x0:g}", hc.statistic, hc.se, hc.passed, **hc.detail))

    off = float(extra.get("scan_offset", 0.25))
    scan = mc.optimality_scan(pr, 0.0, [b - off, b, b + off], sim)
    for other, label in ((scan[0], "minus"), (scan[2], "plus")):
        d, se = mc.paired_difference(other, scan[1])
        checks.append(_check(f"optimality_{label}", d, se, d <= 3.0 * se,
                             value_at_threshold=scan[1].mean, value_other=other.mean))

    law_x0 = float(extra.get("law_x0", 0.0))
    for i, t in enumerate(extra.get("law_times", [0.5, 1.0, 2.0])):
        draws = mc.sample_marginal(pr.params, law_x0, t, sim.n_paths, seed=[int(sim.seed), i])
        mean, se = float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(draws.size))
        exact = pr.params.mean(law_x0, t)
        checks.append(_check(f"marginal_mean_t={t:g}", mean - exact, se, abs(mean - exact) <= 4.0 * se,
                             exact=exact, empirical=mean))

    ok = all(c["passed"] for c in checks)
    doc = {"threshold": _r(b), "seed": int(sim.seed), "n_paths": int(sim.n_paths),
           "status": "PASS" if ok else "FAIL", "checks": checks}
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "verify.json", doc)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: statistic {c['statistic']} se {c['se']}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "kernel": cmd_kernel, "simulate": cmd_simulate, "verify": cmd_verify}


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="greenstop", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default: ./out)")
        sp.add_argument("--seed", type=_seed, default=None, help="overrides sim.seed")
        sp.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoThresholdError, GridResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_THRESHOLD


if __name__ == "__main__":
    sys.exit(main())
