"""Compare the numba and numpy backends on the hot loops.

Usage: python3 benchmarks/bench_backends.py [--paths N] [--repeat R]
"""

import argparse
import time

import numpy as np

from greenstop._backend import HAVE_NUMBA
from greenstop.kernel_fourier import FourierGrid, ghat_row
from greenstop.model import EXAMPLE_1, Problem
from greenstop.montecarlo import SimConfig, estimate_policy_value, occupation_times


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    # best of at least two runs, so JIT compilation is never timed
    repeat = max(2, args.repeat)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    pr = Problem.jump_ou(EXAMPLE_1, 1.0)
    grid = FourierGrid()
    cfg = SimConfig(n_paths=args.paths, seed=1)
    occ_cfg = SimConfig(n_paths=max(1, args.paths // 10), seed=1)

    cases = {
        "transform row (n_z/2 panels)": lambda b: ghat_row(EXAMPLE_1, 1.0, 0.0, grid.dz, grid.n_z // 2, backend=b)[-1],
        f"policy value ({cfg.n_paths} paths)": lambda b: estimate_policy_value(pr, 0.0, 1.1442, cfg, backend=b).mean,
        f"occupation ({occ_cfg.n_paths} paths)": lambda b: occupation_times(
            EXAMPLE_1, 1.0, [1.0, 0.0], [[-1.0, -0.5], [-2.0, -1.5]], occ_cfg, backend=b).sum(),
    }
    print(f"{'case':<34}" + "".join(f"{b:>12}" for b in backends) + "   agree")
    for name, fn in cases.items():
        res = [best_of(lambda: fn(b), repeat) for b in backends]
        agree = all(np.isclose(r[1], res[0][1], rtol=1e-10, atol=1e-12) for r in res)
        print(f"{name:<34}" + "".join(f"{t:>11.3f}s" for t, _ in res) + f"   {agree}")


if __name__ == "__main__":
    main()
