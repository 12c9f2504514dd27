"""Time the numba loop kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both flavours get identical inputs; the first numba call (compilation or
cache load) is excluded from the timings.
"""
import argparse
import math
import timeit

import numpy as np

from driftnoise import kernels


def cases(gen):
    v = np.concatenate([[0.0], np.cumsum(gen.standard_normal(3 ** 9))])
    z = gen.standard_normal((4096, 2 * 3 ** 4))
    u = gen.random(4096)
    eps = 1 / 27
    sw = (0.6 * math.sqrt(eps), 1.1 * math.sqrt(eps), eps, 9 * math.sqrt(2), 0.0, 9 * math.sqrt(2), 1 / 9,
          0.0, 0.85 * math.sqrt(eps) + 8 * math.sqrt(eps), math.sqrt(eps) / 4)
    return {
        "enumerate_minima (3^9 points, K=64)": (kernels.enumerate_minima_loop, kernels.enumerate_minima_numpy, (v, 64)),
        "bridge_accept (4096 x 162 cells)": (kernels.bridge_accept_loop, kernels.bridge_accept_numpy,
                                             (1.0, 1.0, 2 / 162, z, u)),
        "square_wave_integral (level 2)": (kernels.square_wave_integral_loop, kernels.square_wave_integral_numpy, sw),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    gen = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>8s}")
    for name, (loop, vec, a) in cases(gen).items():
        loop(*a)  # compile / load from cache
        t_loop = min(timeit.repeat(lambda: loop(*a), number=1, repeat=args.repeat)) * 1e3
        t_vec = min(timeit.repeat(lambda: vec(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:40s} {t_loop:12.3f} {t_vec:12.3f} {t_vec / t_loop:8.2f}")


if __name__ == "__main__":
    main()
