"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Prints best-of-N wall time per call for each kernel and backend, and the
largest absolute difference between backend outputs.
"""
import argparse
import time

import numpy as np

from spadaac import kernels
from spadaac.channel import (
    ChannelEstimate,
    ReceiverConfig,
    exponent_terms,
    log_binomial_coefficients,
    square_root_constellation,
)


def best_time(fn, repeat: int, number: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def cases():
    cfg = ReceiverConfig()
    slope, _ = exponent_terms(cfg, ChannelEstimate(50.0, 50.0), square_root_constellation(50.0, 4))
    log_binom = log_binomial_coefficients(cfg.k_max)
    x = 0.4 * slope

    rng = np.random.default_rng(1)
    trials, per_trial = 2000, 500
    times = np.sort(rng.random(trials * per_trial).reshape(trials, per_trial), axis=1).ravel() * 200.0
    pixels = rng.integers(0, 4, size=times.size, dtype=np.int64)
    offsets = np.arange(0, times.size + 1, per_trial, dtype=np.int64)

    slopes = tuple(slope.tolist())
    zeros = (0.0,) * len(slopes)
    return {
        "rate_and_derivatives (M=4, k_max=100)": (
            lambda k: k.rate_and_derivatives(log_binom, slope, x), 200,
        ),
        "arrival_counts (1e6 photons)": (
            lambda k: k.arrival_counts(times, pixels, offsets, 2.0, 0.1, 4, 100), 3,
        ),
        "trigger_solve (M=4)": (
            lambda k: k.trigger_solve(slopes, zeros, 0.7, 1e-12, 1e-14, 100), 2000,
        ),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':42s} {'backend':8s} {'time/call':>12s} {'speedup':>9s} {'max |diff|':>11s}")
    for name, (call, number) in cases().items():
        ref_out = call(found["python"])
        ref_t = best_time(lambda: call(found["python"]), args.repeat, max(1, number // 20))
        print(f"{name:42s} {'python':8s} {ref_t * 1e6:10.1f}us {1.0:9.1f} {0.0:11.2e}")
        if "cython" in found:
            out = call(found["cython"])
            t = best_time(lambda: call(found["cython"]), args.repeat, number)
            diff = float(np.max(np.abs(np.asarray(out, dtype=float) - np.asarray(ref_out, dtype=float))))
            print(f"{'':42s} {'cython':8s} {t * 1e6:10.1f}us {ref_t / t:9.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
