"""Compiled core versus NumPy fallback on the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--n 200] [--d 4] [--repeat 20]

Prints the median wall time per call for each kernel and backend and the
speed-up of the compiled core. Both backends are also checked to agree.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from esag import kernels
from esag.dist import sample_rows
from esag.linalg import gamma_dim
from esag.regress import Dataset, OptimizerConfig, fit


def _median_time(func, repeat: int) -> float:
    func()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    n, d = args.n, args.d
    p = gamma_dim(d)
    MU = rng.normal(size=d) * 3 + 0.3 * rng.normal(size=(n, d))
    G = 0.5 * rng.normal(size=p) + 0.1 * rng.normal(size=(n, p))
    Y = sample_rows(MU, G, rng)
    data = Dataset(Y, rng.uniform(1, 2, size=(n, 1)))

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled core not built; only the fallback is timed")

    cases = {
        "logpdf": lambda be: kernels.logpdf(Y, MU, G, backend=be),
        "logpdf_grad": lambda be: kernels.logpdf_grad(Y, MU, G, backend=be),
        "vpower(-1)": lambda be: kernels.vpower(MU, G, -1.0, backend=be),
        "fit(full)": lambda be: fit(data, config=OptimizerConfig(n_restarts=0, backend=be)),
    }
    if len(backends) == 2:
        a = kernels.logpdf_grad(Y, MU, G, backend="compiled")
        b = kernels.logpdf_grad(Y, MU, G, backend="python")
        err = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
        print(f"max |compiled - python| in logpdf_grad: {err:.2e}")

    print(f"n={n} d={d} repeat={args.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{be:>14}" for be in backends) + ("    speed-up" if len(backends) == 2 else ""))
    for name, func in cases.items():
        reps = max(3, args.repeat // 5) if name.startswith("fit") else args.repeat
        t = {be: _median_time(lambda: func(be), reps) for be in backends}
        row = f"{name:<14}" + "".join(f"{t[be] * 1e3:>12.3f}ms" for be in backends)
        if len(backends) == 2:
            row += f"{t['python'] / t['compiled']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
