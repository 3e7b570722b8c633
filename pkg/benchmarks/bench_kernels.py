"""Time one SGD epoch per kernel: compiled extension vs pure-Python fallback.

    python benchmarks/bench_kernels.py [--n 20000] [--repeat 3]

Both backends receive identical inputs; the script also reports the largest
parameter difference after the epoch, which should be ~1e-12 or below.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cfsampling import _pykernels as python
from cfsampling import kernels
from cfsampling.recommenders.models import init_params

NU, NI, D = 943, 1682, 16


def make_inputs(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    users = rng.integers(0, NU, n).astype(np.int64)
    items = rng.integers(0, NI, n).astype(np.int64)
    neg = ((items + rng.integers(1, NI, n)) % NI).astype(np.int64)
    ratings = rng.integers(1, 6, n).astype(np.float64)
    order = rng.permutation(n).astype(np.int64)
    return users, items, neg, ratings, order


def run(mod, name, params, data, lr=0.01, reg=1e-4):
    users, items, neg, ratings, order = data
    p = params
    H = p.W1.shape[0] if p.has_mlp else 0
    none = np.zeros((0, H))
    if name == "mse_epoch":
        return mod.mse_epoch(users, items, ratings, order, p.alpha, p.beta_u, p.beta_i,
                             p.gamma_u, p.gamma_i, lr, reg)
    if name == "bpr_epoch":
        return mod.bpr_epoch(users, items, neg, order, p.beta_i, p.gamma_u, p.gamma_i, lr, reg)
    if name == "neumf_mse_epoch":
        return mod.neumf_mse_epoch(users, items, ratings, order, p.alpha, p.beta_u, p.beta_i,
                                   p.gamma_u, p.gamma_i, p.W1, p.b1, p.w2, p.b2, none, lr, reg)
    return mod.neumf_bpr_epoch(users, items, neg, order, p.beta_i, p.gamma_u, p.gamma_i,
                               p.W1, p.b1, p.w2, p.b2, none, none, lr, reg)


CASES = [("mse_epoch", "MF"), ("bpr_epoch", "MF"), ("neumf_mse_epoch", "NeuMFLite"),
         ("neumf_bpr_epoch", "NeuMFLite")]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="interactions per epoch")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    data = make_inputs(args.n)
    print(f"{'kernel':<18}{'compiled s':>12}{'python s':>12}{'speed-up':>10}{'max diff':>11}")
    for name, algo in CASES:
        base = init_params(algo, NU, NI, D, np.random.default_rng(1), alpha=3.5)
        tc = best_of(lambda: run(kernels.compiled, name, base.copy(), data), args.repeat)
        tp = best_of(lambda: run(python, name, base.copy(), data), args.repeat)
        a, b = base.copy(), base.copy()
        run(kernels.compiled, name, a, data)
        run(python, name, b, data)
        diff = max(float(np.abs(a.arrays()[k] - b.arrays()[k]).max(initial=0)) for k in a.arrays())
        print(f"{name:<18}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.0f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
