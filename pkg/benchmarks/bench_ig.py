"""Time the two path-gradient routes on the 64-256-256-24 policy.

    python3 benchmarks/bench_ig.py [--p 25 1024 65536] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from state_saliency.pathsum import path_gradient_sum
from state_saliency.synth import SplitMix64, SynthConfig, gen_random_policy


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, nargs="+", default=[25, 1024, 65536])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--bias-scale", type=float, default=0.0)
    args = ap.parse_args()

    pol = gen_random_policy(SynthConfig(seed=0, bias_scale=args.bias_scale))
    x = SplitMix64(0, "bench").uniform(-1.0, 1.0, 64)
    zero = np.zeros(64)
    rows = pol.resolve_mask()
    print(f"{'p':>7} {'dense [s]':>10} {'affine [s]':>11} {'max |diff|':>11}")
    for p in args.p:
        dense = path_gradient_sum(pol, zero, x, p, rows, "dense")
        affine = path_gradient_sum(pol, zero, x, p, rows, "affine")
        td = best_of(lambda: path_gradient_sum(pol, zero, x, p, rows, "dense"), args.repeat)
        ta = best_of(lambda: path_gradient_sum(pol, zero, x, p, rows, "affine"), args.repeat)
        print(f"{p:>7} {td:>10.4f} {ta:>11.4f} {np.max(np.abs(dense - affine)) / p:>11.2e}")


if __name__ == "__main__":
    main()
