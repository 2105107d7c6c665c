"""Compare the compiled and numpy orbit kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--L L]
"""

import argparse
import timeit

import numpy as np

from stochdom import kernels
from stochdom.linalg import random_stochastic


def stack(rng, L, n):
    return np.array([random_stochastic(n, rng) for _ in range(L)])


def cases(L):
    rng = np.random.default_rng(0)
    for n in (2, 4, 8):
        mats = stack(rng, L, n)
        frame = np.eye(n)
        G = np.eye(n) + 0.1
        yield f"chain_product n={n}", lambda impl, m=mats: impl.chain_product(m)
        yield f"qr_steps n={n} stride=1", lambda impl, m=mats, f=frame: impl.qr_steps(m, f, 1)
        yield f"qr_steps n={n} stride=8", lambda impl, m=mats, f=frame: impl.qr_steps(m, f, 8)
        yield f"cone_push n={n}", lambda impl, m=mats, g=G: impl.cone_push(m, g)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--L", type=int, default=4096, help="orbit length per call")
    args = ap.parse_args(argv)
    impls = kernels.backends()
    names = sorted(impls)
    print(f"L={args.L}, best of {args.repeat}; times in ms")
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(args.L):
        times = {}
        for name in names:
            impl = impls[name]
            times[name] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)) * 1e3
        row = f"{label:28s}" + "".join(f"{times[n]:12.2f}" for n in names)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
