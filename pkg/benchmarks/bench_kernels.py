"""Timing comparison of the numba and numpy batch-evaluation backends.

Evaluates value+gradient batches for a few representative fields at
increasing batch sizes and prints a table of throughput plus speedup.

Run: python3 benchmarks/bench_kernels.py [--sizes 1000,10000,100000] [--repeats 5]
"""

import argparse
import os
import time

import numpy as np

from gammaw import _tape
from gammaw.field_expr import parse_field
from gammaw.gamma_calculus import gamma_w_field
from gammaw.presets import gaussian_problem


def build_cases():
    p = gaussian_problem(2)
    f = parse_field("exp(dot((0.3,-0.2),x)) * (1 + normsq(x))", 2)
    return [
        ("weight", p.W),
        ("payload", f),
        ("gamma_w(f,f)", gamma_w_field(p, f, f)),
    ]


def time_backend(field, pts: np.ndarray, backend: str, repeats: int) -> float:
    os.environ["GAMMAW_BACKEND"] = backend
    _tape.eval_values_grads(field, pts[:8])  # warm up (JIT + cache)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        _tape.eval_values_grads(field, pts)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,10000,100000")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    backends = ["numpy"] + (["numba"] if _tape.HAS_NUMBA else [])
    if len(backends) == 1:
        print("numba not available; timing numpy only")

    rng = np.random.default_rng(0)
    cases = build_cases()
    print(f"{'field':>14} {'n':>8} " + " ".join(f"{b + ' (ms)':>12}" for b in backends)
          + ("  speedup" if len(backends) == 2 else ""))
    for label, field in cases:
        for n in sizes:
            pts = rng.uniform(-3, 3, size=(n, 2))
            times = [time_backend(field, pts, b, args.repeats) for b in backends]
            row = f"{label:>14} {n:>8} " + " ".join(f"{t * 1e3:>12.3f}" for t in times)
            if len(times) == 2:
                row += f"  {times[0] / times[1]:>7.2f}x"
            print(row)
    os.environ.pop("GAMMAW_BACKEND", None)


if __name__ == "__main__":
    main()
