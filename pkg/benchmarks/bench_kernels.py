"""Time each hot kernel under numba against its pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Both variants are called directly from ``beetlenet.kernels.KERNELS`` so one
process measures both, independently of ``BEETLENET_JIT``. The first numba
call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from beetlenet import _jit
from beetlenet.kernels import KERNELS


def make_inputs(name, rng, scale=1.0):
    s = lambda v: max(2, int(round(v * scale)))  # noqa: E731
    if name == "im2col":
        n, c, h = 2, s(16), s(32)
        return (rng.normal(size=(n, c, h + 2, h + 2)), 3, 3, 1, h, h)
    if name == "col2im":
        n, c, h = 2, s(16), s(32)
        return (rng.normal(size=(c * 9, n * h * h)), n, c, h + 2, h + 2, 3, 3, 1, h, h)
    if name == "maxpool_forward":
        h = s(64)
        return (rng.normal(size=(2, 8, h + 2, h + 2)), 3, 2, h // 2, h // 2)
    if name == "maxpool_backward":
        h = s(64)
        xp = rng.normal(size=(2, 8, h + 2, h + 2))
        _, arg = KERNELS["maxpool_forward"][1](xp, 3, 2, h // 2, h // 2)
        return (rng.normal(size=arg.shape), arg, h + 2, h + 2, 3, 2)
    if name == "warp_bilinear":
        side = s(100)
        inv = np.array([[0.98, 0.1, 1.5], [-0.1, 1.02, -2.0]])
        return (rng.uniform(0, 255, size=(side, side, 3)), inv, side, side)
    if name == "tsne_gradient":
        n = s(300)
        P = rng.uniform(size=(n, n))
        P = P + P.T
        np.fill_diagonal(P, 0.0)
        return (rng.normal(size=(n, 2)), P / P.sum())
    if name == "sq_distances":
        return (rng.normal(size=(s(200), 3072)), rng.normal(size=(s(400), 3072)))
    if name == "smo_solve":
        n = s(200)
        X = rng.normal(size=(n, 2))
        y = np.where(X[:, 0] + 0.3 * X[:, 1] > 0, 1.0, -1.0)
        return (np.ascontiguousarray(X @ X.T), y, 1.0, 1e-3, 1_000_000)
    if name == "best_split":
        n, d = s(400), 64
        return (rng.normal(size=(n, d)), rng.integers(0, 4, size=n), np.arange(d), 4, 1)
    raise KeyError(name)


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies problem sizes")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _jit.HAVE_NUMBA:
        print("numba is not installed; only the numpy column is meaningful")
    print(f"{'kernel':<18}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (loops, numpy_fn) in KERNELS.items():
        inputs = make_inputs(name, np.random.default_rng(args.seed), args.scale)
        loops(*inputs)  # compile
        t_jit = best_time(loops, inputs, args.repeat)
        t_np = best_time(numpy_fn, inputs, args.repeat)
        print(f"{name:<18}{1e3 * t_jit:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
