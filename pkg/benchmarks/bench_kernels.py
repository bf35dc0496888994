"""Time the compiled kernels against their plain-Python bodies.

    python3 benchmarks/bench_kernels.py [--steps 2048] [--repeat 5]

The first compiled call is excluded (JIT compile or cache load). The
end-to-end row runs the estimator in a subprocess with and without
MINIMAX_BVP_DISABLE_NUMBA so both paths use their own import.
"""
import argparse
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from minimax_bvp import linalg, ode
from minimax_bvp._accel import USE_NUMBA, python_impl


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(steps, rng):
    d = 4
    mn = np.ascontiguousarray(0.3 * rng.standard_normal((steps + 1, d, d)))
    mm = np.ascontiguousarray(0.3 * rng.standard_normal((steps, d, d)))
    gn = rng.standard_normal((steps + 1, d))
    gm = rng.standard_normal((steps, d))
    gbn = np.ascontiguousarray(rng.standard_normal((16, steps + 1, d)))
    gbm = np.ascontiguousarray(rng.standard_normal((16, steps, d)))
    h = 2 * math.pi / steps
    lim = ode.DIVERGENCE_LIMIT
    a = rng.standard_normal((8, 8))

    def sweeps(kernel):
        return lambda: kernel(a.copy(), np.eye(8), 800)

    return {
        "rk4_matrix": lambda k: (lambda: k(mn, mm, h, lim)),
        "rk4_matrix_inverse": lambda k: (lambda: k(mn, mm, h, lim)),
        "rk4_affine": lambda k: (lambda: k(mn, mm, gn, gm, np.zeros(d), h, lim)),
        "rk4_affine_batch": lambda k: (lambda: k(mn, mm, gbn, gbm, h, lim)),
        "_jacobi_sweeps": sweeps,
    }


_E2E = """
import math, time
import numpy as np
from minimax_bvp.observer import solve_estimator
from minimax_bvp.ode import Grid
from minimax_bvp.scenarios import random_case
case = random_case(np.random.default_rng(1), n=3, want_feasible=True)
grid = Grid(2 * math.pi, {steps})
solve_estimator(case.system, case.ell, Grid(2 * math.pi, 16))
start = time.perf_counter()
solve_estimator(case.system, case.ell, grid)
print(time.perf_counter() - start)
"""


def end_to_end(steps, disable):
    env = dict(os.environ)
    env.pop("MINIMAX_BVP_DISABLE_NUMBA", None)
    if disable:
        env["MINIMAX_BVP_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _E2E.format(steps=steps)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not USE_NUMBA:
        sys.exit("numba is disabled or missing; nothing to compare")

    rng = np.random.default_rng(0)
    kernels = {name: getattr(ode, name, None) or getattr(linalg, name) for name in kernel_cases(1, rng)}
    print(f"{'kernel':<22}{'numba [ms]':>12}{'python [ms]':>14}{'speed-up':>10}")
    for name, make in kernel_cases(args.steps, rng).items():
        fast, slow = make(kernels[name]), make(python_impl(kernels[name]))
        fast()
        tf = _best(fast, args.repeat)
        ts = _best(slow, max(1, args.repeat // 2))
        print(f"{name:<22}{1e3 * tf:>12.3f}{1e3 * ts:>14.3f}{ts / tf:>9.1f}x")

    tf, ts = end_to_end(args.steps, False), end_to_end(args.steps, True)
    print(f"{'estimator (n=3)':<22}{1e3 * tf:>12.3f}{1e3 * ts:>14.3f}{ts / tf:>9.1f}x")


if __name__ == "__main__":
    main()
