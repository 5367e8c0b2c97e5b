"""Benchmark the compiled accumulation loops against the numpy fallback.

Runs segment_kernel_mass and cox_accumulate on growing synthetic inputs
through both implementations, checks they agree, and prints a timing
table. Usage:

    python3 benchmarks/bench_backends.py [--repeat 5] [--sizes 1000,10000,100000]
"""

import argparse
import time

import numpy as np

from netcox.backend import EPANECHNIKOV_ID, available_backends


def _segment_inputs(rng, m):
    t0 = 0.5
    h = 0.25
    lo = rng.uniform(t0 - h, t0 + h, size=m)
    hi = np.minimum(lo + rng.uniform(0.0, h, size=m), t0 + h)
    return lo, hi, t0, h, EPANECHNIKOV_ID, h / 20.0


def _cox_inputs(rng, m, q=4):
    X = rng.normal(size=(m, q))
    w = rng.uniform(0.1, 1.0, size=m)
    theta = rng.normal(scale=0.3, size=q)
    return X, w, theta


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def _check_close(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    scale = max(1.0, float(np.abs(a).max()))
    worst = float(np.abs(a - b).max()) / scale
    if worst > 1e-12:
        raise AssertionError(f"backend disagreement: rel err {worst:.3e}")
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="1000,10000,100000")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    impls = available_backends()
    if "cython" not in impls:
        print("compiled extension not importable; timing the fallback only")
    rng = np.random.default_rng(17)

    header = f"{'case':>24} {'size':>8} " + " ".join(
        f"{name:>12}" for name in impls) + "   speedup"
    print(header)
    print("-" * len(header))
    for m in sizes:
        seg = _segment_inputs(rng, m)
        cox = _cox_inputs(rng, m)
        for case, fn_name, inputs in (
                ("segment_kernel_mass", "segment_kernel_mass", seg),
                ("cox_accumulate", "cox_accumulate", cox)):
            times = {}
            outs = {}
            for name, mod in impls.items():
                times[name], outs[name] = _time(getattr(mod, fn_name),
                                                inputs, args.repeat)
            if len(outs) == 2:
                if case == "cox_accumulate":
                    for a, b in zip(outs["python"], outs["cython"]):
                        _check_close(a, b)
                else:
                    _check_close(outs["python"], outs["cython"])
            row = f"{case:>24} {m:>8} " + " ".join(
                f"{times[name] * 1e3:>10.3f}ms" for name in impls)
            if len(times) == 2:
                row += f"   {times['python'] / times['cython']:>6.2f}x"
            print(row)


if __name__ == "__main__":
    main()
