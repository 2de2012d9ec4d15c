"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Times single-sample and replay-batch gradients on the default 8-16-8
Q-network, then one full 500-episode training run per backend.
"""

import argparse
import time

import numpy as np

from nkdna.agent import HyperParams, train
from nkdna.environment import default_maze
from nkdna.neural import init_network, kernels


def timeit(fn, repeat):
    fn()  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20000)
    args = ap.parse_args()

    net = init_network([8, 16, 8], ["tanh", "linear"], seed=0)
    p, sizes, acts = net.pack(), net.sizes_array(), net.act_codes()
    rng = np.random.default_rng(0)
    x1 = np.eye(8)[:1]
    X16 = np.eye(8)[rng.integers(8, size=16)]
    T16 = rng.normal(size=(16, 8))
    M16 = np.eye(8, dtype=bool)[rng.integers(8, size=16)]

    print(f"{'backend':8s} {'forward(1)':>12s} {'grad(1)':>12s} {'grad(16)':>12s} {'train 500ep':>12s}")
    for name in sorted(kernels.BACKENDS):
        k = kernels.get_backend(name)
        f1 = timeit(lambda: k.forward_batch(p, sizes, acts, x1), args.repeat)
        g1 = timeit(lambda: k.grad_batch(p, sizes, acts, x1, T16[:1], M16[:1]), args.repeat)
        g16 = timeit(lambda: k.grad_batch(p, sizes, acts, X16, T16, M16), args.repeat)
        saved = kernels.BACKEND
        kernels.BACKEND = name
        try:
            t0 = time.perf_counter()
            train(default_maze(), HyperParams(seed=0))
            tr = time.perf_counter() - t0
        finally:
            kernels.BACKEND = saved
        print(f"{name:8s} {f1 * 1e6:10.2f}us {g1 * 1e6:10.2f}us {g16 * 1e6:10.2f}us {tr:11.3f}s")


if __name__ == "__main__":
    main()
