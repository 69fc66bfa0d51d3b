"""Compare the numba and numpy backends of the two hot kernels.

    python3 benchmarks/bench_kernels.py --dims 200 500 1000 --words 200 1000

two_hop: dense two-hop substitution scores over a |V| x |V| connection matrix.
edit_table: Levenshtein DP table between two word-id sequences.
The first numba call (JIT compile) is timed separately and excluded from the means.
"""

import argparse
import time

import numpy as np

from pdbias import _kernels


def timeit(fn, *args, repeat=5):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return float(np.median(times)), float(np.std(times))


def random_conn(rng, n, density=0.05):
    c = rng.random((n, n)) * (rng.random((n, n)) < density)
    sums = c.sum(axis=1, keepdims=True)
    return np.divide(c, sums, out=np.zeros_like(c), where=sums > 0)


def report(name, size, args, repeat):
    t_np, s_np = timeit(getattr(_kernels, f"numpy_{name}"), *args, repeat=repeat)
    line = f"{name:<10} {size:>6}  numpy {t_np * 1e3:9.2f} ms +/- {s_np * 1e3:6.2f}"
    fast = getattr(_kernels, f"numba_{name}")
    if fast is not None:
        t_nb, s_nb = timeit(fast, *args, repeat=repeat)
        line += f"  numba {t_nb * 1e3:9.2f} ms +/- {s_nb * 1e3:6.2f}  speedup {t_np / t_nb:6.2f}x"
    print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--words", type=int, nargs="+", default=[50, 200, 1000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"active backend: {_kernels.BACKEND} (numba available: {_kernels.HAVE_NUMBA})")
    if _kernels.HAVE_NUMBA:
        start = time.perf_counter()
        _kernels.numba_two_hop(random_conn(rng, 4), np.ones((4, 4), dtype=bool))
        _kernels.numba_edit_table(np.arange(3), np.arange(2))
        print(f"numba JIT warm-up: {time.perf_counter() - start:.2f} s")

    for n in args.dims:
        conn = random_conn(rng, n)
        allowed = rng.random((n, n)) < 0.5
        np.testing.assert_allclose(_kernels.numpy_two_hop(conn, allowed),
                                   _kernels.two_hop(conn, allowed), rtol=0, atol=1e-12)
        report("two_hop", n, (conn, allowed), args.repeat)
    for n in args.words:
        ref = rng.integers(0, 50, n)
        hyp = rng.integers(0, 50, n)
        report("edit_table", n, (ref, hyp), args.repeat)


if __name__ == "__main__":
    main()
