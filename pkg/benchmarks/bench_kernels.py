"""Time the compiled filter kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--minutes 10] [--repeat 3]

Each kernel runs on a synthetic record and the outputs of both backends are
checked for bitwise equality before timing is reported.
"""

import argparse
import time

import numpy as np

from ecgovo import _kernels_py
from ecgovo.signal_io import synthesize_ecg

try:
    from ecgovo import _kernels as _compiled
except ImportError:
    _compiled = None

CASES = [
    ("low_pass", lambda m, x: m.low_pass(x)),
    ("high_pass", lambda m, x: m.high_pass(x)),
    ("derivative", lambda m, x: m.derivative(x)),
    ("moving_window_integrate", lambda m, x: m.moving_window_integrate(x, 30)),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--minutes", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rec, _ = synthesize_ecg(75, args.minutes * 60, 0.05, seed=0)
    x = np.ascontiguousarray(rec.samples)
    print(f"{len(x)} samples ({args.minutes:g} min at {rec.fs:g} Hz)")
    if _compiled is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':26s}{'python ms':>12s}{'compiled ms':>14s}{'speed-up':>10s}")
    for name, call in CASES:
        t_py = best_of(lambda: call(_kernels_py, x), args.repeat) * 1e3
        if _compiled is None:
            print(f"{name:26s}{t_py:12.2f}{'-':>14s}{'-':>10s}")
            continue
        same = np.array_equal(call(_kernels_py, x), call(_compiled, x))
        t_c = best_of(lambda: call(_compiled, x), args.repeat) * 1e3
        flag = "" if same else "  OUTPUT MISMATCH"
        print(f"{name:26s}{t_py:12.2f}{t_c:14.2f}{t_py / t_c:9.1f}x{flag}")


if __name__ == "__main__":
    main()
