"""Compiled vs pure-Python outcome-tree walker.

    python benchmarks/bench_kernels.py [--runs N] [--repeat R]

Times ``walk_batch`` on each built-in scenario's collapse policy with both
backends, checks they agree run for run, and times a full
``monte_carlo_check`` with whichever backend is active.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wignerlab import kernels
from wignerlab.consistency import monte_carlo_check
from wignerlab.policies import evolve, parse_policy
from wignerlab.scenarios import BUILTINS

CASES = [
    ("molecule_toy", {}, "collapse_at:F"),
    ("epr_bell", {"theta": 1.0}, "collapse_at:Alice,Bob"),
    ("wigners_friend", {}, "collapse_at:F"),
    ("decoherence_demo", {"n_env": 6}, "collapse_at:F,W"),
]


def _walk(backend, arrays, n, seed):
    n_read = len(arrays["readout_checks"])
    leaf = np.zeros(n, dtype=np.int64)
    read = np.zeros(n * n_read, dtype=np.int64)
    backend.walk_batch(
        seed, 0, n,
        arrays["node_child_start"], arrays["node_child_count"], arrays["node_leaf"],
        arrays["child_node"], arrays["child_prob"], arrays["child_alive"],
        n_read, arrays["readout_start"], arrays["readout_count"],
        arrays["readout_prob"], arrays["readout_alive"],
        leaf, read,
    )
    return leaf, read


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    else:
        print("compiled backend not built; timing the Python fallback only")

    print(f"{'scenario':<18} {'backend':<8} {'runs/s':>14} {'speedup':>8}")
    for name, params, policy in CASES:
        s = BUILTINS[name].build(**params)
        arrays = evolve(s, parse_policy(policy)).arrays
        times, outs = {}, {}
        for label, backend in backends:
            n = args.runs if label == "cython" else max(args.runs // 20, 1)
            t, out = _best(lambda: _walk(backend, arrays, n, args.seed), args.repeat)
            times[label] = n / t
            outs[label] = out
        if "cython" in outs:
            m = len(outs["python"][0])
            same = np.array_equal(outs["python"][0], outs["cython"][0][:m]) and np.array_equal(
                outs["python"][1], outs["cython"][1][: len(outs["python"][1])]
            )
            if not same:
                raise SystemExit(f"{name}: backends disagree")
        for label in times:
            speed = times[label] / times["python"]
            print(f"{name:<18} {label:<8} {times[label]:>14,.0f} {speed:>7.1f}x")

    s = BUILTINS["molecule_toy"].build()
    t, _ = _best(lambda: monte_carlo_check(s, "collapse_at:F", 10_000, args.seed), args.repeat)
    print(f"\nmonte_carlo_check(molecule_toy, collapse_at:F, 10^4 runs) [{kernels.BACKEND}]: {t * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
