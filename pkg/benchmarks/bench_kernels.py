"""Time each hot kernel under numba and under the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 16,64,128]

Each row reports the best-of-``repeat`` wall time per call after one warm-up
call (which also pays numba's compile cost), plus the largest difference
between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from bwot import _kernels
from bwot._backend import HAVE_NUMBA


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def sinkhorn_case(n, rng):
    x = np.sort(rng.standard_normal(n))
    C = 0.5 * (x[:, None] - x[None, :]) ** 2
    a = rng.dirichlet(np.full(n, 2.0))
    b = rng.dirichlet(np.full(n, 2.0))
    eps = 1e-2 * float(np.median(C))
    z = np.zeros(n)

    def call(kernel):
        return kernel(C, np.log(a), np.log(b), eps, z.copy(), z.copy(), 1e-10, 20_000, 10)

    return call, lambda out: np.concatenate([out[0], out[1]])


def assignment_case(n, rng):
    C = rng.random((n, n))
    return (lambda kernel: kernel(C)), (lambda out: np.asarray(out[0], dtype=float))


def langevin_case(n, rng):
    eta = rng.uniform(-0.999, 0.999, size=n * n)
    return (lambda kernel: kernel(eta, 1e-12, 100)), (lambda out: out[0])


CASES = {
    "sinkhorn_log": sinkhorn_case,
    "assignment": assignment_case,
    "inv_langevin": langevin_case,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="16,64,128")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    if not HAVE_NUMBA:
        print("numba is disabled; timing the numpy fallback only")
    print(f"{'kernel':<14}{'n':>6}{'numba [ms]':>13}{'numpy [ms]':>13}{'speedup':>9}{'max |diff|':>12}")
    for name, make in CASES.items():
        for n in sizes:
            call, key = make(n, np.random.default_rng(n))
            t_np = best_time(lambda: call(_kernels.get(name, "numpy")), args.repeat)
            if HAVE_NUMBA:
                t_nb = best_time(lambda: call(_kernels.get(name, "numba")), args.repeat)
                diff = np.abs(key(call(_kernels.get(name, "numba"))) - key(call(_kernels.get(name, "numpy")))).max()
                print(f"{name:<14}{n:>6}{1e3 * t_nb:>13.3f}{1e3 * t_np:>13.3f}{t_np / t_nb:>9.1f}{diff:>12.1e}")
            else:
                print(f"{name:<14}{n:>6}{'-':>13}{1e3 * t_np:>13.3f}{'-':>9}{'-':>12}")


if __name__ == "__main__":
    main()
