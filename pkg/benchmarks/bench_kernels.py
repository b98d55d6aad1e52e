"""Time the compiled kernels against the pure-Python fallback.

Run with ``python benchmarks/bench_kernels.py``. Results go to stdout as a
small table; pass ``--json PATH`` to keep them.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from opelab import _kernels_py

try:
    from opelab import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    for m in (6, 10, 12):
        w = rng.normal(size=(64, m, m))
        yield f"hafnian_batch 64 x {m} legs", "hafnian_batch", w + np.transpose(w, (0, 2, 1))
    for n in (8, 32, 128):
        yield f"nn_map_batch 256 x {n} points in 3d", "nn_map_batch", rng.normal(size=(256, n, 3))


def best_of(fn, arg, repeat):
    timer = timeit.Timer(lambda: fn(arg))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'case':40s} {'python [s]':>12s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, fn, arg in cases(rng):
        py = best_of(getattr(_kernels_py, fn), arg, args.repeat)
        if _kernels is None:
            cc, speed = float("nan"), float("nan")
        else:
            np.testing.assert_allclose(getattr(_kernels, fn)(arg), getattr(_kernels_py, fn)(arg), rtol=1e-10)
            cc = best_of(getattr(_kernels, fn), arg, args.repeat)
            speed = py / cc
        rows.append({"case": name, "python_s": py, "compiled_s": cc, "speedup": speed})
        print(f"{name:40s} {py:12.3e} {cc:13.3e} {speed:8.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
