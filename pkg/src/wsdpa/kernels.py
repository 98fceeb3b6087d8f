"""Hot numeric inner loops.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy version.
The numba path is used when numba imports cleanly and the environment
variable ``WSDPA_DISABLE_NUMBA`` is not set to a truthy value. Both paths
compute the same quantities; they may differ in the last few ulps because
the summation order differs.
"""
from __future__ import annotations

import os

import numpy as np

_TRUTHY = {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("WSDPA_DISABLE_NUMBA", "").strip().lower() not in _TRUTHY


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# 1D analysis / synthesis along the last axis
#
# Analysis with half-point symmetric extension:
#     a[i] = sum_k lo[k] * x[sym(2i + 1 - k)],   i < (n + f - 1) // 2
# where sym reflects about the half-sample points at both ends
# (x[-1] = x[0], x[n] = x[n - 1]). Requires n >= f - 1 so a single
# reflection covers the extension.
#
# Synthesis is the transpose-shaped upsample/filter pair:
#     y[2i + k - f + 2] += a[i] * rec_lo[k] + d[i] * rec_hi[k]
# keeping the first n_out samples.
# ---------------------------------------------------------------------------


def _sym_index(n: int, f: int) -> np.ndarray:
    out_len = (n + f - 1) // 2
    t = 2 * np.arange(out_len)[:, None] + 1 - np.arange(f)[None, :]
    t = np.where(t < 0, -t - 1, t)
    t = np.where(t >= n, 2 * n - 1 - t, t)
    return t


def dwt_rows_numpy(x, lo, hi):
    x = np.ascontiguousarray(x, dtype=np.float64)
    idx = _sym_index(x.shape[1], lo.size)
    g = x[:, idx]
    return g @ lo, g @ hi


def idwt_rows_numpy(a, d, rec_lo, rec_hi, n_out):
    rows, n_in = a.shape
    f = rec_lo.size
    y = np.zeros((rows, n_out))
    i = np.arange(n_in)
    for k in range(f):
        j = 2 * i + k - f + 2
        ok = (j >= 0) & (j < n_out)
        y[:, j[ok]] += a[:, i[ok]] * rec_lo[k] + d[:, i[ok]] * rec_hi[k]
    return y


def pivoted_qr_numpy(a):
    """Businger-Golub column-pivoted Householder QR; returns (perm, rdiag)."""
    w = np.array(a, dtype=np.float64, copy=True)
    n, m = w.shape
    perm = np.arange(m)
    rdiag = np.zeros(m)
    for k in range(min(n, m)):
        sub = w[k:, k:]
        norms = np.einsum("ij,ij->j", sub, sub)
        p = k + int(np.argmax(norms))
        best = norms[p - k]
        if best <= 0.0:
            break
        if p != k:
            w[:, [k, p]] = w[:, [p, k]]
            perm[[k, p]] = perm[[p, k]]
        alpha = np.sqrt(best)
        sign = 1.0 if w[k, k] >= 0.0 else -1.0
        v = w[k:, k].copy()
        v[0] += sign * alpha
        vv = v @ v
        rdiag[k] = alpha
        if k + 1 < m:
            tail = w[k:, k + 1:]
            tail -= np.outer(v, (2.0 / vv) * (v @ tail))
        w[k, k] = -sign * alpha
        w[k + 1:, k] = 0.0
    return perm, rdiag


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def dwt_rows_numba(x, lo, hi):
        rows, n = x.shape
        f = lo.size
        out_len = (n + f - 1) // 2
        a = np.empty((rows, out_len))
        d = np.empty((rows, out_len))
        for r in range(rows):
            for i in range(out_len):
                sa = 0.0
                sd = 0.0
                for k in range(f):
                    t = 2 * i + 1 - k
                    if t < 0:
                        t = -t - 1
                    elif t >= n:
                        t = 2 * n - 1 - t
                    v = x[r, t]
                    sa += lo[k] * v
                    sd += hi[k] * v
                a[r, i] = sa
                d[r, i] = sd
        return a, d

    @numba.njit(cache=True)
    def idwt_rows_numba(a, d, rec_lo, rec_hi, n_out):
        rows, n_in = a.shape
        f = rec_lo.size
        y = np.zeros((rows, n_out))
        for r in range(rows):
            for i in range(n_in):
                ai = a[r, i]
                di = d[r, i]
                base = 2 * i - f + 2
                for k in range(f):
                    j = base + k
                    if j >= 0 and j < n_out:
                        y[r, j] += ai * rec_lo[k] + di * rec_hi[k]
        return y

    @numba.njit(cache=True)
    def _pivoted_qr_cols(wt):
        # wt is the transposed working matrix: wt[j] is column j.
        m, n = wt.shape
        perm = np.arange(m)
        rdiag = np.zeros(m)
        v = np.empty(n)
        for k in range(min(n, m)):
            best = -1.0
            p = k
            for j in range(k, m):
                s = 0.0
                for i in range(k, n):
                    s += wt[j, i] * wt[j, i]
                if s > best:
                    best = s
                    p = j
            if best <= 0.0:
                break
            if p != k:
                for i in range(n):
                    tmp = wt[k, i]
                    wt[k, i] = wt[p, i]
                    wt[p, i] = tmp
                tp = perm[k]
                perm[k] = perm[p]
                perm[p] = tp
            alpha = np.sqrt(best)
            sign = 1.0 if wt[k, k] >= 0.0 else -1.0
            vv = 0.0
            for i in range(k, n):
                v[i] = wt[k, i]
            v[k] += sign * alpha
            for i in range(k, n):
                vv += v[i] * v[i]
            rdiag[k] = alpha
            for j in range(k + 1, m):
                dot = 0.0
                for i in range(k, n):
                    dot += v[i] * wt[j, i]
                fac = 2.0 * dot / vv
                for i in range(k, n):
                    wt[j, i] -= fac * v[i]
            wt[k, k] = -sign * alpha
            for i in range(k + 1, n):
                wt[k, i] = 0.0
        return perm, rdiag

    def pivoted_qr_numba(a):
        wt = np.array(np.asarray(a, dtype=np.float64).T, order="C", copy=True)
        return _pivoted_qr_cols(wt)

else:  # pragma: no cover
    dwt_rows_numba = dwt_rows_numpy
    idwt_rows_numba = idwt_rows_numpy
    pivoted_qr_numba = pivoted_qr_numpy


def dwt_rows(x, lo, hi):
    """Single-level analysis of every row of ``x``; returns (approx, detail)."""
    if USE_NUMBA:
        return dwt_rows_numba(np.ascontiguousarray(x, dtype=np.float64), lo, hi)
    return dwt_rows_numpy(x, lo, hi)


def idwt_rows(a, d, rec_lo, rec_hi, n_out):
    """Single-level synthesis of every row pair; output rows have ``n_out`` samples."""
    if USE_NUMBA:
        return idwt_rows_numba(
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(d, dtype=np.float64),
            rec_lo,
            rec_hi,
            n_out,
        )
    return idwt_rows_numpy(a, d, rec_lo, rec_hi, n_out)


def pivoted_qr(a):
    if USE_NUMBA:
        return pivoted_qr_numba(a)
    return pivoted_qr_numpy(a)
