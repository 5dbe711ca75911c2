"""Compiled vs numpy kernels: per-step training cost and selection kernels.

Usage: python benchmarks/bench_kernels.py [--steps N]
"""

import argparse
import time

import numpy as np

from medianfit import _pykernels
from medianfit.nn_core import ACTIVATIONS, optimizer_hyper

try:
    from medianfit import _kernels
except ImportError:  # built with MEDIANFIT_NO_EXT
    _kernels = None

ARCHES = ([5, 8, 1], [5, 64, 1], [5, 256, 1], [5, 64, 64, 1], [5, 64, 64, 64, 64, 1])


def bench(fn, repeat):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def train_step_cost(mod, sizes, act, steps, dropout):
    rng = np.random.default_rng(0)
    sizes = np.asarray(sizes, dtype=np.intp)
    n = mod.n_params(sizes) if hasattr(mod, "n_params") else _pykernels.n_params(sizes)
    theta = rng.normal(0, 0.1, n)
    state = np.zeros((2, n))
    X, y = rng.random((128, sizes[0])), rng.random(128)
    keep = (rng.random((128, int(sizes[1:-1].sum()))) > dropout).astype(np.uint8) if dropout else None
    scale = 1 / (1 - dropout)
    hyper = optimizer_hyper("adam")
    work = np.empty(_pykernels.workspace_size(sizes, 128))
    t = [0]

    def step():
        t[0] += 1
        mod.train_step(theta, sizes, X, y, act, keep, scale, 0.0, 1e-4, 1, state, hyper, t[0], work)

    return bench(step, steps)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=500)
    args = ap.parse_args()
    backends = [("python", _pykernels)] + ([("compiled", _kernels)] if _kernels else [])

    print(f"{'sizes':<22}{'activation':<11}{'dropout':<9}"
          + "".join(f"{name + ' us':>14}" for name, _ in backends) + f"{'speedup':>10}")
    for sizes in ARCHES:
        for act in ("relu", "tanh"):
            for dropout in (0.0, 0.2):
                times = [train_step_cost(m, sizes, ACTIVATIONS.index(act), args.steps, dropout)
                         for _, m in backends]
                row = f"{str(sizes):<22}{act:<11}{dropout:<9}" + "".join(f"{1e6 * t:14.1f}" for t in times)
                if len(times) == 2:
                    row += f"{times[0] / times[1]:10.2f}"
                print(row)

    print()
    rng = np.random.default_rng(1)
    for n in (40, 200, 1000):
        F = rng.random((n, 2))
        cells = []
        for name, m in backends:
            nd = bench(lambda: m.nondominated_mask(F), 20)
            ib = bench(lambda: m.ibea_truncate(F, 0.05, n // 2), 3)
            cells.append(f"{name}: nondominated {1e6 * nd:9.1f} us, ibea {1e3 * ib:8.2f} ms")
        print(f"n={n:<5} " + " | ".join(cells))


if __name__ == "__main__":
    main()
