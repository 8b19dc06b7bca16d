"""Compare the compiled kernels with their pure-Python twin.

    python3 benchmarks/bench_kernels.py [--sizes 100 1000 5000] [--repeat 5]

Prints one row per (kernel, size) with the best-of-``repeat`` time of each
implementation and the speed-up. Results are also checked for bit-identity.
"""

from __future__ import annotations

import argparse
import math
import random
import timeit

from aspecteval import _kernels_py

try:
    from aspecteval import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def inputs(n: int, seed: int) -> tuple[list[float], list[float]]:
    rng = random.Random(seed)
    # coarse grid so ranks and pair counts see plenty of ties
    x = [float(rng.randint(0, 20)) for _ in range(n)]
    y = [v + rng.gauss(0, 5) for v in x]
    return x, y


CASES = {
    "cosine": lambda k, x, y: k.cosine(x, y),
    "pearson": lambda k, x, y: k.pearson(x, y),
    "average_ranks": lambda k, x, y: k.average_ranks(x),
    "pair_counts": lambda k, x, y: k.pair_counts(x, y),
}


def best_time(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def same(a, b) -> bool:
    if isinstance(a, float) and math.isnan(a):
        return isinstance(b, float) and math.isnan(b)
    return a == b


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 5000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'kernel':<14} {'n':>6} {'python':>12} {'cython':>12} {'speed-up':>9}")
    for name, case in CASES.items():
        for n in args.sizes:
            if name == "pair_counts" and n > 2000:
                continue  # quadratic; the large size says nothing new
            x, y = inputs(n, args.seed)
            assert same(case(compiled, x, y), case(_kernels_py, x, y)), f"{name} differs at n={n}"
            t_py = best_time(lambda: case(_kernels_py, x, y), args.repeat)
            t_c = best_time(lambda: case(compiled, x, y), args.repeat)
            print(f"{name:<14} {n:>6} {t_py * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us {t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
