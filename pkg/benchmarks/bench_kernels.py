"""Time the pure-Python and compiled kernels on identical inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--dims 5 15 50]

Prints one line per (kernel, dimension) with the best-of-``repeat`` time per
call for each backend and the speedup.  Also times one full 15-D Rosenbrock
run of the optimizer per backend, since that is what the kernels serve.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from casmore import kernels


def _multiplier_cases(n: int, kind: int, count: int = 50):
    rng = np.random.default_rng(n + 100 * kind)
    cases = []
    for _ in range(count):
        d = rng.standard_normal(n) * 10 ** rng.uniform(-2, 2)
        b = rng.standard_normal(n)
        m = max(0.0, -d.min())
        w = 0.0 if kind == kernels.MEAN else m + (0.5 if kind == kernels.JOINT else 0.0)
        cases.append((kind, d + m, b, w, 0.1, max(1e-12, 1e-12 * m)))
    return cases


def _time(fn, repeat: int) -> float:
    number = 5
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_kernels(dims, repeat):
    backends = kernels.available_backends()
    names = sorted(backends)
    print(f"{'kernel':<22}{'n':>4}" + "".join(f"{b + ' [us]':>16}" for b in names) + f"{'speedup':>10}")
    for n in dims:
        xs = np.random.default_rng(n).standard_normal((4 * n * n, n))
        rows = {"quadratic_features": {}}
        for b in names:
            mod = backends[b]
            rows["quadratic_features"][b] = _time(lambda: mod.quadratic_features(xs), repeat)
        for kind, label in ((kernels.MEAN, "mean"), (kernels.COV, "cov"), (kernels.JOINT, "joint")):
            cases = _multiplier_cases(n, kind)
            key = f"solve_multiplier/{label}"
            rows[key] = {}
            for b in names:
                mod = backends[b]

                def go(mod=mod):
                    for c in cases:
                        mod.solve_multiplier(*c)

                rows[key][b] = _time(go, repeat) / len(cases)
        for key, times in rows.items():
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{key:<22}{n:>4}" + "".join(f"{times[b] * 1e6:>16.2f}" for b in names) + f"{speed:>10.1f}")


_RUN = """
import time, numpy as np
from casmore import GaussianSearchDist, OptimizerConfig, StopCondition, kernels, make, run
spec = make("rosenbrock", 15)
t0 = time.perf_counter()
res = run(OptimizerConfig(seed=0), spec.noiseless, StopCondition(target=1e-8, max_evaluations=12000),
          GaussianSearchDist.isotropic(np.zeros(15), 1.0), minimize=True)
print(kernels.BACKEND, res.evaluations, time.perf_counter() - t0)
"""


def bench_optimizer():
    for pure in ("0", "1"):
        env = dict(os.environ, CASMORE_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", _RUN], env=env, capture_output=True, text=True, check=True)
        backend, evals, secs = out.stdout.split()
        print(f"rosenbrock-15 run, {backend:<7} backend: {int(evals)} evaluations in {float(secs):.2f} s")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--dims", type=int, nargs="+", default=[5, 15, 50])
    p.add_argument("--skip-run", action="store_true", help="only time the kernels")
    args = p.parse_args(argv)
    if "cython" not in kernels.available_backends():
        print("compiled extension not built; only the Python backend is available")
    bench_kernels(args.dims, args.repeat)
    if not args.skip_run:
        bench_optimizer()


if __name__ == "__main__":
    main()
