"""Compare the compiled kernels with their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the median time of each backend and the
speed ratio. Also times a case118 N-1 constraint reduction when
``--reduction`` is given (a few minutes per backend).
"""
import argparse
import importlib
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from gridmarket import _kernels_py

try:
    from gridmarket import _kernels as _kernels_c
except ImportError:  # not built
    _kernels_c = None


def _cases(rng):
    AR = np.ascontiguousarray(rng.normal(size=(20000, 64)))
    slack = np.abs(rng.normal(size=20000)) + 0.1
    n = 5000
    xb = rng.uniform(0, 1, n)
    lb = np.zeros(n)
    ub = np.where(rng.random(n) < 0.5, 1.0, np.inf)
    delta = rng.normal(size=n)
    basis = rng.permutation(n).astype(np.int64)
    d = np.abs(rng.normal(size=n))
    alpha = rng.normal(size=n)
    state = rng.integers(0, 3, n).astype(np.int8)
    ang = np.sort(rng.uniform(0, 2 * np.pi, 300))
    A = np.ascontiguousarray(np.column_stack([np.cos(ang), np.sin(ang)]))
    b = np.ones(300)
    return {
        "first_hits": (AR, slack, 1e-12),
        "ratio_test": (xb, lb, ub, delta, 1e-9, basis, False),
        "dual_ratio_test": (d, alpha, state, 1.0, 1e-9, False),
        "polygon_vertices": (A, b, 1e-9),
    }


def _time(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _reduction(pure):
    env = dict(os.environ)
    if pure:
        env["GRIDMARKET_PURE_PYTHON"] = "1"
    code = (
        "import time\n"
        "from gridmarket.dataio import load_fixture\n"
        "from gridmarket.grid import *\n"
        "from gridmarket.redundancy import Polytope, reduce\n"
        "from gridmarket.dataio import Options\n"
        "ds = load_fixture('case118.m')\n"
        "o = Options(); o.contingency.enabled = True\n"
        "topo = build_topology(ds); p = compute_ptdf(topo)\n"
        "g = build_security_constraints(p, enumerate_contingencies(topo, o, p))\n"
        "bd = ds.injection_bounds()\n"
        "t0 = time.perf_counter(); e = reduce(Polytope(g.A, g.b, -bd, bd, True))\n"
        "print(len(g), len(e), time.perf_counter() - t0)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split()


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--reduction", action="store_true", help="also time a case118 N-1 reduction")
    args = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<18} {'python [ms]':>12} {'cython [ms]':>12} {'ratio':>8}")
    for name, call in cases.items():
        tp = _time(getattr(_kernels_py, name), call, args.repeat)
        if _kernels_c is None:
            print(f"{name:<18} {tp * 1e3:12.3f} {'n/a':>12} {'n/a':>8}")
            continue
        tc = _time(getattr(_kernels_c, name), call, args.repeat)
        print(f"{name:<18} {tp * 1e3:12.3f} {tc * 1e3:12.3f} {tp / tc:8.2f}")
    if args.reduction:
        for pure in (True, False):
            rows, kept, secs = _reduction(pure)
            label = "python" if pure else importlib.import_module("gridmarket.kernels").BACKEND
            print(f"case118 N-1 reduction ({label}): {kept} of {rows} rows kept in {float(secs):.1f} s")


if __name__ == "__main__":
    main()
