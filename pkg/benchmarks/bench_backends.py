"""Benchmark the compiled power-sum core against the NumPy fallback.

Run:  python benchmarks/bench_backends.py

Timed workloads:
  * raw weighted power sums (the hot primitive itself)
  * classic smoother stats over a grid
  * a full local log-linear grid fit
  * one LSCV score evaluation (leave-one-out refits)

Set LPDENS_PURE_PYTHON=1 to force the fallback backend for the package-
level workloads; the raw primitive is timed for both backends in one run.
"""

import time

import numpy as np

from lpdens import models, solver
from lpdens.backend import BACKEND, py_weighted_sums
from lpdens.bandwidth import lscv_score
from lpdens.kernels import classic_estimate, get_kernel

try:
    from lpdens._fastsums import weighted_sums as compiled_sums
except ImportError:
    compiled_sums = None


def timeit(label, fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    print(f"{label:<44} {best * 1e3:10.2f} ms")
    return result


def main():
    rng = np.random.default_rng(0)
    data = rng.normal(size=2000)
    kernel = get_kernel("gaussian")
    kid = kernel.backend_id
    xs = np.linspace(-3, 3, 200)

    print(f"active package backend: {BACKEND}")
    print()

    def raw(ws):
        def run():
            acc = 0.0
            for x in xs:
                acc += ws(data, float(x), 0.3, kid, 3, 2)[0, 0]
            return acc

        return run

    if compiled_sums is not None:
        a = timeit("raw sums, compiled (200 pts, n=2000)", raw(compiled_sums))
        b = timeit("raw sums, numpy    (200 pts, n=2000)", raw(py_weighted_sums))
        assert abs(a - b) < 1e-10 * max(abs(a), 1.0)
    else:
        print("compiled extension unavailable; timing the fallback only")
        timeit("raw sums, numpy    (200 pts, n=2000)", raw(py_weighted_sums))

    timeit(
        "classic stats grid (200 pts, n=2000)",
        lambda: [classic_estimate(kernel, 0.3, data, float(x)) for x in xs],
    )

    fam = models.family_polyexp(2, 0.0)
    sch = models.weights_make("score", fam)
    timeit(
        "log-linear grid fit (200 pts, n=2000)",
        lambda: solver.fit_grid(fam, sch, kernel, 0.3, data, xs),
    )

    small = data[:400]
    fam1 = models.family_polyexp(1, 0.0)
    sch1 = models.weights_make("score", fam1)
    timeit(
        "LSCV score, one h (n=400)",
        lambda: lscv_score(fam1, sch1, kernel, small, 0.35),
        repeat=1,
    )


if __name__ == "__main__":
    main()
