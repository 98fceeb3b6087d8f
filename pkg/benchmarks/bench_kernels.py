"""Compare the numba and numpy backends on the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each row times one operation with both backends on identical input and
reports the median wall time, the speedup and the max absolute difference
between the two outputs. The first numba call is excluded (JIT warm-up).
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from wsdpa import kernels
from wsdpa.selection import rrqr_order
from wsdpa.wavelet import get_basis, wavedec_batch, waverec_batch


def _time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _both(fn, repeat):
    out, times = {}, {}
    saved = kernels.USE_NUMBA
    try:
        for use in (True, False):
            kernels.USE_NUMBA = use and kernels.HAVE_NUMBA
            times[use] = _time(fn, repeat)
            out[use] = fn()
    finally:
        kernels.USE_NUMBA = saved
    return times[True], times[False], out[True], out[False]


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    n_img = 200 if args.quick else 2000
    qr_shape = (300, 200) if args.quick else (1500, 800)

    imgs = rng.random((n_img, 32, 32, 3))
    coeffs, layout = wavedec_batch(imgs, "db2", 1)
    tall = rng.normal(size=qr_shape)
    square = np.linalg.qr(tall, mode="r")[: qr_shape[1]]
    b = get_basis("db4")
    rows = rng.random((n_img * 32, 32))
    a_rows, d_rows = kernels.dwt_rows_numpy(rows, b.dec_lo, b.dec_hi)

    cases = [
        (f"dwt_rows db4 {rows.shape[0]}x32", lambda: kernels.dwt_rows(rows, b.dec_lo, b.dec_hi)),
        (f"idwt_rows db4 {rows.shape[0]}x{a_rows.shape[1]}",
         lambda: kernels.idwt_rows(a_rows, d_rows, b.rec_lo, b.rec_hi, 32)),
        (f"wavedec_batch db2 N=1, {n_img}x32x32x3", lambda: wavedec_batch(imgs, "db2", 1)[0]),
        (f"waverec_batch db2 N=1, {n_img}x32x32x3", lambda: waverec_batch(coeffs, layout)),
        (f"pivoted_qr {square.shape[0]}x{square.shape[1]}", lambda: kernels.pivoted_qr(square)),
        (f"rrqr_order {qr_shape[0]}x{qr_shape[1]}", lambda: rrqr_order(tall).perm),
    ]
    print(f"numba available: {kernels.HAVE_NUMBA}; median of {args.repeat} runs")
    print(f"{'operation':44s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in cases:
        t_nb, t_np, o_nb, o_np = _both(fn, args.repeat)
        print(f"{name:44s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:7.1f}x {_diff(o_nb, o_np):11.2e}")


if __name__ == "__main__":
    main()
