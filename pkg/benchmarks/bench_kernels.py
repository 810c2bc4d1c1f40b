"""Timing of the compiled kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np
from scipy import special

from sojourn import _fallback, kernels


def cases():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((64, 4096))
    w = np.full(64, 1 / 64)
    coef = special.rgamma(0.4 * np.arange(180) + 1.0)
    x = rng.uniform(0, 2.3, 100_000)
    return [
        ("sojourn_sums 64x4096, n_max=4", lambda m: m.sojourn_sums(z, w, 1.0, 1.0, 4)),
        ("sojourn_sums 64x4096, n_max=12", lambda m: m.sojourn_sums(z, w, 1.0, 1.0, 12)),
        ("ml_taylor 1e5 points, nu=0.4", lambda m: m.ml_taylor(coef, x)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"compiled backend: {kernels.BACKEND}")
    print(f"{'case':36s} {'compiled [ms]':>14s} {'numpy [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases():
        tc = min(timeit.repeat(lambda: fn(kernels), number=1, repeat=args.repeat)) * 1e3
        tp = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {tc:14.2f} {tp:12.2f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
