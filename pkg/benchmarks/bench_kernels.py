"""Time the numba and numpy kernel backends on network-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 16] [--json out.json]

Both variants are compiled/imported regardless of GRIDFORGE_BACKEND, so a
single run compares them side by side.  Outputs are checked for agreement
before anything is timed.
"""

import argparse
import json
import timeit

import numpy as np

from gridforge import kernels as K
from gridforge._accel import configure_threads

# (name, input NHWC, kernel (F, kh, kw, C)) - endonet, GAF and cart-pole sensor layers
CASES = [
    ("endonet conv", (50, 50, 3), (16, 3, 3, 3)),
    ("gaf conv", (50, 50, 2), (8, 3, 3, 2)),
    ("sensor conv", (64, 64, 1), (8, 5, 5, 1)),
]
POOLS = [("endonet pool", (48, 48, 16), 2), ("sensor pool", (60, 60, 8), 4)]


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench(batch, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for name, shape, kshape in CASES:
        x = rng.normal(size=(batch, *shape))
        k = rng.normal(size=kshape)
        b = rng.normal(size=kshape[0])
        y = K._conv2d_forward_nb(x, k, b)
        g = rng.normal(size=y.shape)
        np.testing.assert_allclose(y, K._conv2d_forward_np(x, k, b), atol=1e-10)
        K._conv2d_backward_nb(x, k, g, True)  # warm the JIT
        rows.append((name + " fwd",
                     best_of(lambda: K._conv2d_forward_nb(x, k, b), repeat, 3),
                     best_of(lambda: K._conv2d_forward_np(x, k, b), repeat, 3)))
        rows.append((name + " bwd",
                     best_of(lambda: K._conv2d_backward_nb(x, k, g, True), repeat, 3),
                     best_of(lambda: K._conv2d_backward_np(x, k, g, True), repeat, 3)))
    for name, shape, w in POOLS:
        x = rng.normal(size=(batch, *shape))
        out, arg = K._maxpool_forward_nb(x, w, w)
        assert np.array_equal(out, K._maxpool_forward_np(x, w, w)[0])
        g = rng.normal(size=out.shape)
        rows.append((name + " fwd",
                     best_of(lambda: K._maxpool_forward_nb(x, w, w), repeat, 5),
                     best_of(lambda: K._maxpool_forward_np(x, w, w), repeat, 5)))
        rows.append((name + " bwd",
                     best_of(lambda: K._maxpool_backward_nb(g, arg, x.shape, w, w), repeat, 5),
                     best_of(lambda: K._maxpool_backward_np(g, arg, x.shape, w, w), repeat, 5)))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    configure_threads(args.threads)

    rows = bench(args.batch, args.repeat)
    print(f"batch {args.batch}, best of {args.repeat}, ms per call")
    print(f"{'kernel':<22}{'numba':>10}{'numpy':>10}{'speedup':>10}")
    for name, t_nb, t_np in rows:
        print(f"{name:<22}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>9.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump([{"kernel": n, "numba_s": a, "numpy_s": b} for n, a, b in rows], fh, indent=2)


if __name__ == "__main__":
    main()
