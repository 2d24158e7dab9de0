#!/usr/bin/env python3
"""Time the compiled kernels against the NumPy reference implementation.

Both backends compute the coverage section tally and the local-window
standard deviation; this script times each on the same inputs and checks
they agree before reporting the speedup.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from robusteval.kernels import BACKEND, pure

try:
    from robusteval.kernels import _ckernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_case(title, make_args, pure_fn, compiled_fn):
    args = make_args()
    ref = pure_fn(*args)
    t_pure = best_of(lambda: pure_fn(*args))
    line = f"{title:<44s} pure {t_pure * 1e3:8.2f} ms"
    if compiled_fn is not None:
        got = compiled_fn(*args)
        ref_parts = ref if isinstance(ref, tuple) else (ref,)
        got_parts = got if isinstance(got, tuple) else (got,)
        for a, b in zip(ref_parts, got_parts):
            assert np.allclose(
                np.asarray(a, np.float64), np.asarray(b, np.float64), atol=1e-10
            ), f"{title}: backends disagree"
        t_comp = best_of(lambda: compiled_fn(*args))
        line += f"   compiled {t_comp * 1e3:8.2f} ms   speedup {t_pure / t_comp:6.1f}x"
    print(line)


def main():
    rng = np.random.default_rng(0)
    print(f"active backend: {BACKEND}")
    if compiled is None:
        print("compiled extension unavailable; timing the reference only\n")
    print()

    for n, neurons, k in ((200, 64, 100), (1000, 256, 100), (5000, 512, 1000)):
        low = rng.uniform(-1, 0, neurons)
        high = low + rng.uniform(0.5, 1.5, neurons)
        values = rng.uniform(-1.5, 1.5, (n, neurons))
        bench_case(
            f"coverage_tally  n={n} neurons={neurons} k={k}",
            lambda v=values, lo=low, hi=high, kk=k: (v, lo, hi, kk),
            pure.coverage_tally,
            None if compiled is None else compiled.coverage_tally,
        )

    for side, radius in ((32, 1), (128, 1), (256, 2)):
        img = rng.uniform(0, 1, (side, side))
        bench_case(
            f"window_std      image={side}x{side} radius={radius}",
            lambda im=img, r=radius: (im, r),
            pure.window_std,
            None if compiled is None else compiled.window_std,
        )


if __name__ == "__main__":
    main()
