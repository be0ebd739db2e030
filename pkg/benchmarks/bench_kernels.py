"""Compare the compiled kernel backend against the numpy fallback.

Times stage_loglik and smo_solve on representative problem sizes and
checks that both backends agree.  Run with:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from biobench._kernels import backend_name
from biobench._kernels import fallback


def _get_compiled():
    try:
        from biobench._kernels import _core

        return _core
    except ImportError:
        return None


def timeit(fn, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_stage_loglik(mod, n=600, d=20, thresholds=3):
    rng = np.random.default_rng(0)
    S = d * thresholds + 1
    Z = np.ascontiguousarray(rng.normal(size=(n, d)))
    mu = np.ascontiguousarray(rng.uniform(0, 3, size=(S, d)))
    sd = np.ones(d)
    return timeit(lambda: mod.stage_loglik(Z, mu, sd))


def bench_smo(mod, n=700, d=50):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(n, d))
    y = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    X += y[:, None] * 0.5
    K = np.ascontiguousarray(X @ X.T)
    cap = np.full(n, 1.0)

    def run():
        alpha = np.zeros(n)
        grad = np.full(n, -1.0)
        return mod.smo_solve(K, y, cap, 1e-3, 200000, alpha, grad)

    return timeit(run), run()


def main():
    compiled = _get_compiled()
    print(f"active backend: {backend_name()}")
    mods = {"numpy": fallback}
    if compiled is not None:
        mods["cython"] = compiled
    else:
        print("compiled backend unavailable; timing fallback only")

    print("\nstage_loglik (600 subjects, 20 vars, 61 stages)")
    for name, mod in mods.items():
        print(f"  {name:8s} {bench_stage_loglik(mod) * 1e3:8.2f} ms")

    print("\nsmo_solve (700 samples, linear gram)")
    results = {}
    for name, mod in mods.items():
        t, res = bench_smo(mod)
        results[name] = res
        print(f"  {name:8s} {t * 1e3:8.2f} ms  (iters={res[0]}, b={res[2]:.4f})")

    if len(results) == 2:
        same_b = abs(results["numpy"][2] - results["cython"][2]) < 1e-9
        print(f"\nbackends agree on bias term: {same_b}")


if __name__ == "__main__":
    main()
