"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 20000]

Times the three hot entry points at production-ish shapes (embedding dim
64, hidden 32, 3 negatives; 2000-row cosine scan) and prints per-call
times plus the speedup. Both implementations are checked for agreement
before timing.
"""

import argparse
import time

import numpy as np

from cogtree._kernels import numpy_impl

try:
    from cogtree._kernels import _cykern as cykern
except ImportError:
    cykern = None


def _problem(d=64, h=32, m=3, rows=2000, seed=0):
    rng = np.random.default_rng(seed)
    c = np.ascontiguousarray
    return {
        "W1": c(rng.normal(0, 0.3, (h, d))),
        "b1": c(rng.normal(0, 0.3, h)),
        "b2": c(rng.normal(0, 0.3, 3)),
        "W2": c(rng.normal(0, 0.3, (3, h))),
        "anchor": c(rng.normal(0, 1, d)),
        "negatives": c(rng.normal(0, 1, (m, d))),
        "mat": c(rng.normal(0, 1, (rows, d))),
        "q": c(rng.normal(0, 1, d)),
    }


def _time(fn, repeat):
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20000)
    args = parser.parse_args()
    p = _problem()

    cases = {
        "head_forward": lambda impl: impl.head_forward(
            p["W1"], p["b1"], p["W2"], p["b2"], p["anchor"]
        ),
        "head_loss_grad": lambda impl: impl.head_loss_grad(
            p["W1"], p["b1"], p["W2"], p["b2"], p["anchor"], 0,
            p["negatives"], None, 0.5, 1.0,
        ),
        "cosine_scores": lambda impl: impl.cosine_scores(p["mat"], p["q"]),
    }

    if cykern is None:
        print("compiled extension not available; timing the numpy fallback only")

    print(f"{'kernel':<16} {'numpy us':>10} {'cython us':>10} {'speedup':>8}")
    for name, case in cases.items():
        repeat = args.repeat if name != "cosine_scores" else max(1, args.repeat // 10)
        t_np = _time(lambda: case(numpy_impl), repeat)
        if cykern is None:
            print(f"{name:<16} {t_np * 1e6:>10.2f} {'-':>10} {'-':>8}")
            continue
        got_np, got_cy = case(numpy_impl), case(cykern)
        flat = lambda r: np.concatenate([np.atleast_1d(np.asarray(x)).ravel() for x in (r if isinstance(r, tuple) else (r,))])
        assert np.allclose(flat(got_np), flat(got_cy), rtol=1e-10, atol=1e-12), name
        t_cy = _time(lambda: case(cykern), repeat)
        print(f"{name:<16} {t_np * 1e6:>10.2f} {t_cy * 1e6:>10.2f} {t_np / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
