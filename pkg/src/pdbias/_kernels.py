"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``PDBIAS_DISABLE_NUMBA=1``
to force the numpy path (numba is also skipped if it fails to import).
Both backends are always importable as ``numba_*`` / ``numpy_*`` so tests
and the benchmark can compare them directly.
"""

import os

import numpy as np

_DISABLE = os.environ.get("PDBIAS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by PDBIAS_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# two-hop substitution scores: S_ij = sum_k C_ik C_kj  (i != j, k != i, k != j)
# --------------------------------------------------------------------------

def numpy_two_hop(conn, allowed):
    """Two-hop connection mass between every pair of tokens.

    Zeroing the diagonal of ``conn`` removes the k == i and k == j terms;
    the i == j entries of the product are then cleared explicitly.
    ``allowed`` masks which (i, j) cells may be nonzero.
    """
    c0 = np.array(conn, dtype=np.float64, copy=True)
    np.fill_diagonal(c0, 0.0)
    out = c0 @ c0
    np.fill_diagonal(out, 0.0)
    out[~allowed] = 0.0
    return out


def _two_hop_loop(conn, allowed):
    n = conn.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for k in range(n):
            cik = conn[i, k]
            if k == i or cik == 0.0:
                continue
            for j in range(n):
                if j == i or j == k or not allowed[i, j]:
                    continue
                ckj = conn[k, j]
                if ckj != 0.0:
                    out[i, j] += cik * ckj
    return out


# --------------------------------------------------------------------------
# Levenshtein DP table over integer-coded word sequences
# --------------------------------------------------------------------------

def numpy_edit_table(ref, hyp):
    """Full (len(ref)+1) x (len(hyp)+1) unit-cost edit-distance table.

    Rows are filled with numpy: the insertion chain along a row is a
    running minimum of ``best[j] - j``.
    """
    n, m = len(ref), len(hyp)
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    d[0] = np.arange(m + 1)
    cols = np.arange(m + 1)
    hyp = np.asarray(hyp)
    for i in range(1, n + 1):
        best = np.empty(m + 1, dtype=np.int64)
        best[0] = i
        if m:
            sub = d[i - 1, :-1] + (hyp != ref[i - 1])
            best[1:] = np.minimum(sub, d[i - 1, 1:] + 1)
        d[i] = np.minimum.accumulate(best - cols) + cols
    return d


def _edit_table_loop(ref, hyp):
    n, m = ref.shape[0], hyp.shape[0]
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    for j in range(m + 1):
        d[0, j] = j
    for i in range(1, n + 1):
        d[i, 0] = i
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            a = d[i - 1, j - 1] + cost
            b = d[i - 1, j] + 1
            c = d[i, j - 1] + 1
            if b < a:
                a = b
            if c < a:
                a = c
            d[i, j] = a
    return d


if HAVE_NUMBA:
    numba_two_hop = njit(cache=False, nogil=True)(_two_hop_loop)
    numba_edit_table = njit(cache=False, nogil=True)(_edit_table_loop)
else:
    numba_two_hop = None
    numba_edit_table = None


def two_hop(conn, allowed):
    conn = np.ascontiguousarray(conn, dtype=np.float64)
    allowed = np.ascontiguousarray(allowed, dtype=np.bool_)
    if HAVE_NUMBA:
        return numba_two_hop(conn, allowed)
    return numpy_two_hop(conn, allowed)


def edit_table(ref, hyp):
    ref = np.ascontiguousarray(ref, dtype=np.int64)
    hyp = np.ascontiguousarray(hyp, dtype=np.int64)
    if HAVE_NUMBA:
        return numba_edit_table(ref, hyp)
    return numpy_edit_table(ref, hyp)
