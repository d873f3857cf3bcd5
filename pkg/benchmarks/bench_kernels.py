"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is run once to trigger compilation, checked for agreement with
the numpy version, then timed (best of ``--repeat``).  Without numba the
script reports the numpy timings only.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from rcar import kernels
from rcar._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    rng = np.random.default_rng(0)
    # Small and large widths: the dispatcher switches to numpy at GAP_NUMBA_MAX.
    for P in ((64, 512) if quick else (64, 2048)):
        b = np.zeros(P + 1)
        b[1:] = 0.6 * 0.5 ** np.arange(1, P + 1)
        x = rng.random(P - 1)
        yield ("gap_matvec P=%d" % P, (lambda b=b, x=x: kernels._gap_matvec_nb(b, x)),
               (lambda b=b, x=x: kernels.gap_matvec_numpy(b, x)))

    bt = np.array([0.0, 0.3, 0.3])
    ct = np.array([[0.2, 0.09], [0.09, 0.2]])
    m = 16 if quick else 22
    yield ("closed_shells m=%d" % m,
           lambda: kernels.closed_shells(bt, ct, m, True, backend="numba")[0],
           lambda: kernels.closed_shells(bt, ct, m, True, backend="numpy")[0])

    R, T1 = (2000, 201) if quick else (10000, 301)
    rows = np.ascontiguousarray(rng.random((R, T1, 2)) * 0.6)
    B = np.ones((R, T1))
    yield ("ar_paths R=%d T=%d" % (R, T1 - 1),
           lambda: kernels._ar_paths_nb(rows, B, True),
           lambda: kernels.ar_paths_numpy(rows, B, True))

    Z = np.ascontiguousarray(rng.chisquare(1, (R, T1)))
    Bg = np.full((R, T1), 1 / 0.7)
    yield ("geometric_paths R=%d T=%d" % (R, T1 - 1),
           lambda: kernels._geometric_paths_nb(Z, Bg, 0.3, False)[0],
           lambda: kernels.geometric_paths_numpy(Z, Bg, 0.3, False)[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)

    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':<32}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, fast, slow in cases(args.quick):
        ref = slow()
        t_np = best_of(slow, args.repeat)
        if HAVE_NUMBA:
            out = fast()
            if not np.allclose(out, ref, rtol=1e-12, atol=0.0):
                raise SystemExit(f"{name}: numba and numpy disagree")
            t_nb = best_of(fast, args.repeat)
            print(f"{name:<32}{t_np:>12.4g}{t_nb:>12.4g}{t_np / t_nb:>10.1f}")
        else:
            print(f"{name:<32}{t_np:>12.4g}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
