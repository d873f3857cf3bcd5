"""Hot loops, each with a numba and a pure-numpy implementation.

The public names (``gap_matvec``, ``closed_shells``, ``open_shells``,
``ar_paths``, ``geometric_paths``) dispatch on :data:`rcar._accel.HAVE_NUMBA`
(``gap_matvec`` also on size, see ``GAP_NUMBA_MAX``).
The ``*_numpy`` variants are always importable so tests and the benchmark can
compare the two.
"""
from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

ENUM_GUARD = 100_000_000
GAP_NUMBA_MAX = 256


class EnumerationLimit(RuntimeError):
    """Brute-force enumeration exceeded the pair-count guard."""


# --------------------------------------------------------------------------
# Gap-state transfer operator
# --------------------------------------------------------------------------

@njit(nogil=True)
def _gap_matvec_nb(b, x):
    # b[0..P] with b[0] unused; x[k] holds the gap state d = k + 1.
    n = x.shape[0]
    P = b.shape[0] - 1
    y = np.zeros(n)
    for d in range(1, n + 1):
        acc = 0.0
        hi = min(n, P - d)
        for dp in range(1, hi + 1):
            acc += b[d + dp] * x[dp - 1]
        for dp in range(1, d):
            acc += b[d - dp] * x[dp - 1]
        y[d - 1] = acc
    return y


def gap_matvec_numpy(b, x):
    """``y[d] = sum_d' (b[d+d'] 1{d+d'<=P} + b[d-d'] 1{d'<d}) x[d']`` for d = 1..P-1."""
    n = x.shape[0]
    xf = np.zeros(n + 1)
    xf[1:] = x
    fwd = np.convolve(b, xf[::-1])
    back = np.convolve(b, xf)
    return fwd[n + 1 : 2 * n + 1] + back[1 : n + 1]


def gap_matvec(b, x):
    # np.convolve beats the scalar loop once the operator is a few hundred wide.
    if HAVE_NUMBA and x.shape[0] < GAP_NUMBA_MAX:
        return _gap_matvec_nb(b, x)
    return gap_matvec_numpy(b, x)


def gap_matrix(b):
    """Dense form of the gap operator, shape ``(P-1, P-1)``."""
    P = b.shape[0] - 1
    n = P - 1
    d = np.arange(1, n + 1)
    s = d[:, None] + d[None, :]
    m = np.where(s <= P, b[np.minimum(s, P)], 0.0)
    diff = d[:, None] - d[None, :]
    m += np.where(diff >= 1, b[np.clip(diff, 0, P)], 0.0)
    return m


# --------------------------------------------------------------------------
# Pair enumeration on the label lattice
#
# Every time point 1, 2, ... is labelled none / s / t.  For closed pairs both
# paths must reach every candidate endpoint within P steps; for open pairs a
# pair is recorded at each labelled point (its maximum element).
# Row-sharing conventions: a1=True puts the joint factor on the first jumps,
# otherwise on the jumps into the common endpoint (closed) or nowhere (open).
# --------------------------------------------------------------------------

@njit(nogil=True)
def _closed_shells_nb(bt, ct, P, m_max, a1, guard):
    shells = np.zeros(m_max + 1)
    L = m_max + 2
    ls = np.zeros(L, np.int64)
    lt = np.zeros(L, np.int64)
    fs = np.zeros(L, np.int64)
    ft = np.zeros(L, np.int64)
    w = np.ones(L)
    ch = np.full(L, -1, np.int64)
    count = 0
    u = 1
    while u >= 1:
        c = ch[u]
        if c == -1:
            js = u - ls[u]
            jt = u - lt[u]
            if a1:
                f1 = fs[u] if ls[u] > 0 else js
                f2 = ft[u] if lt[u] > 0 else jt
                val = w[u] * ct[f1, f2]
                if ls[u] > 0:
                    val *= bt[js]
                if lt[u] > 0:
                    val *= bt[jt]
            else:
                val = w[u] * ct[js, jt]
            shells[u] += val
            count += 1
            if count > guard:
                return shells, count
            ch[u] = 0
            continue
        if c >= 3 or u >= m_max:
            u -= 1
            continue
        ch[u] = c + 1
        nls = ls[u]
        nlt = lt[u]
        nfs = fs[u]
        nft = ft[u]
        nw = w[u]
        if c == 0:
            if u + 1 - nls > P or u + 1 - nlt > P:
                continue
        elif c == 1:
            if u + 1 - nlt > P:
                continue
            j = u - nls
            if a1 and nls == 0:
                nfs = j
            else:
                nw *= bt[j]
            nls = u
        else:
            if u + 1 - nls > P:
                continue
            j = u - nlt
            if a1 and nlt == 0:
                nft = j
            else:
                nw *= bt[j]
            nlt = u
        u += 1
        ls[u] = nls
        lt[u] = nlt
        fs[u] = nfs
        ft[u] = nft
        w[u] = nw
        ch[u] = -1
    return shells, count


@njit(nogil=True)
def _open_shells_nb(bt, ct, P, m_max, a1, guard):
    # shells[m] excludes the noise factor; shells[0] is the trivial pair (weight 1).
    shells = np.zeros(m_max + 1)
    shells[0] = 1.0
    L = m_max + 2
    ls = np.zeros(L, np.int64)
    lt = np.zeros(L, np.int64)
    fs = np.zeros(L, np.int64)
    ft = np.zeros(L, np.int64)
    w = np.ones(L)
    ch = np.zeros(L, np.int64)
    count = 0
    u = 1
    while u >= 1:
        c = ch[u]
        if c >= 3 or u > m_max:
            u -= 1
            continue
        ch[u] = c + 1
        nls = ls[u]
        nlt = lt[u]
        nfs = fs[u]
        nft = ft[u]
        nw = w[u]
        if c == 0:
            if u + 1 - nls > P and u + 1 - nlt > P:
                continue
        else:
            if c == 1:
                j = u - nls
                if j > P:
                    continue
                if a1 and nls == 0:
                    nfs = j
                else:
                    nw *= bt[j]
                nls = u
            else:
                j = u - nlt
                if j > P:
                    continue
                if a1 and nlt == 0:
                    nft = j
                else:
                    nw *= bt[j]
                nlt = u
            val = nw
            if a1:
                if nfs > 0 and nft > 0:
                    val *= ct[nfs, nft]
                elif nfs > 0:
                    val *= bt[nfs]
                else:
                    val *= bt[nft]
            shells[u] += val
            count += 1
            if count > guard:
                return shells, count
        u += 1
        ls[u] = nls
        lt[u] = nlt
        fs[u] = nfs
        ft[u] = nft
        w[u] = nw
        ch[u] = 0
    return shells, count


def closed_shells_numpy(bt, ct, P, m_max, a1, guard=ENUM_GUARD):
    """Breadth-first version of the closed-pair enumeration."""
    shells = np.zeros(m_max + 1)
    ls = np.zeros(1, np.int64)
    lt = np.zeros(1, np.int64)
    fs = np.zeros(1, np.int64)
    ft = np.zeros(1, np.int64)
    w = np.ones(1)
    count = 0
    for u in range(1, m_max + 1):
        js = u - ls
        jt = u - lt
        if a1:
            f1 = np.where(ls > 0, fs, js)
            f2 = np.where(lt > 0, ft, jt)
            val = w * ct[f1, f2] * np.where(ls > 0, bt[js], 1.0) * np.where(lt > 0, bt[jt], 1.0)
        else:
            val = w * ct[js, jt]
        shells[u] = val.sum()
        count += val.size
        if count > guard:
            return shells, count
        if u == m_max:
            break
        okn = (u + 1 - ls <= P) & (u + 1 - lt <= P)
        oks = u + 1 - lt <= P
        okt = u + 1 - ls <= P
        first_s = a1 & (ls == 0)
        first_t = a1 & (lt == 0)
        parts = [
            (ls[okn], lt[okn], fs[okn], ft[okn], w[okn]),
            (
                np.full(oks.sum(), u),
                lt[oks],
                np.where(first_s[oks], js[oks], fs[oks]),
                ft[oks],
                np.where(first_s[oks], w[oks], w[oks] * bt[js[oks]]),
            ),
            (
                ls[okt],
                np.full(okt.sum(), u),
                fs[okt],
                np.where(first_t[okt], jt[okt], ft[okt]),
                np.where(first_t[okt], w[okt], w[okt] * bt[jt[okt]]),
            ),
        ]
        ls, lt, fs, ft, w = (np.concatenate([p[i] for p in parts]) for i in range(5))
    return shells, count


def open_shells_numpy(bt, ct, P, m_max, a1, guard=ENUM_GUARD):
    """Breadth-first version of the open-pair enumeration."""
    shells = np.zeros(m_max + 1)
    shells[0] = 1.0
    ls = np.zeros(1, np.int64)
    lt = np.zeros(1, np.int64)
    fs = np.zeros(1, np.int64)
    ft = np.zeros(1, np.int64)
    w = np.ones(1)
    count = 0
    for u in range(1, m_max + 1):
        js = u - ls
        jt = u - lt
        okn = (u + 1 - ls <= P) | (u + 1 - lt <= P)
        oks = js <= P
        okt = jt <= P
        first_s = a1 & (ls == 0)
        first_t = a1 & (lt == 0)
        s_new = (
            np.full(oks.sum(), u),
            lt[oks],
            np.where(first_s[oks], js[oks], fs[oks]),
            ft[oks],
            np.where(first_s[oks], w[oks], w[oks] * bt[np.minimum(js[oks], P)]),
        )
        t_new = (
            ls[okt],
            np.full(okt.sum(), u),
            fs[okt],
            np.where(first_t[okt], jt[okt], ft[okt]),
            np.where(first_t[okt], w[okt], w[okt] * bt[np.minimum(jt[okt], P)]),
        )
        tot = 0.0
        for _, _, nfs, nft, nw in (s_new, t_new):
            if a1:
                jf = np.where(
                    (nfs > 0) & (nft > 0), ct[nfs, nft], np.where(nfs > 0, bt[nfs], bt[nft])
                )
                tot += (nw * jf).sum()
            else:
                tot += nw.sum()
            count += nw.size
        shells[u] = tot
        if count > guard:
            return shells, count
        parts = [(ls[okn], lt[okn], fs[okn], ft[okn], w[okn]), s_new, t_new]
        ls, lt, fs, ft, w = (np.concatenate([p[i] for p in parts]) for i in range(5))
    return shells, count


def _pad_tables(bt, ct):
    P = bt.shape[0] - 1
    cp = np.zeros((P + 1, P + 1))
    cp[1:, 1:] = ct
    return np.ascontiguousarray(bt, dtype=float), cp, P


def closed_shells(bt, ct, m_max, a1, guard=ENUM_GUARD, backend=None):
    """Per-endpoint closed-pair sums ``shells[m]``, m = 0..m_max.

    ``bt`` has length ``P + 1`` (index 0 unused) and ``ct`` is ``P x P``.
    """
    bt, cp, P = _pad_tables(bt, ct)
    use_nb = HAVE_NUMBA if backend is None else backend == "numba"
    if use_nb:
        shells, count = _closed_shells_nb(bt, cp, P, int(m_max), bool(a1), int(guard))
    else:
        shells, count = closed_shells_numpy(bt, cp, P, int(m_max), bool(a1), int(guard))
    if count > guard:
        raise EnumerationLimit(f"more than {guard} closed pairs enumerated")
    return shells, int(count)


def open_shells(bt, ct, m_max, a1, guard=ENUM_GUARD, backend=None):
    """Per-maximum open-pair sums (coefficient part only), plus the pair count."""
    bt, cp, P = _pad_tables(bt, ct)
    use_nb = HAVE_NUMBA if backend is None else backend == "numba"
    if use_nb:
        shells, count = _open_shells_nb(bt, cp, P, int(m_max), bool(a1), int(guard))
    else:
        shells, count = open_shells_numpy(bt, cp, P, int(m_max), bool(a1), int(guard))
    if count > guard:
        raise EnumerationLimit(f"more than {guard} open pairs enumerated")
    return shells, int(count)


# --------------------------------------------------------------------------
# Recursions (batched over replicas)
# --------------------------------------------------------------------------

@njit(nogil=True)
def _ar_paths_nb(R, B, a1):
    n, T1, p = R.shape
    X = np.zeros((n, T1))
    for r in range(n):
        for t in range(T1):
            acc = B[r, t]
            for j in range(1, min(t, p) + 1):
                if a1:
                    acc += R[r, t, j - 1] * X[r, t - j]
                else:
                    acc += R[r, t - j, j - 1] * X[r, t - j]
            X[r, t] = acc
    return X


def ar_paths_numpy(R, B, a1):
    n, T1, p = R.shape
    X = np.zeros((n, T1))
    for t in range(T1):
        acc = B[:, t].copy()
        for j in range(1, min(t, p) + 1):
            row = t if a1 else t - j
            acc += R[:, row, j - 1] * X[:, t - j]
        X[:, t] = acc
    return X


def ar_paths(R, B, a1):
    """Finite-order paths from a zero past.

    ``R[r, u, j-1]`` is the lag-j coefficient of row u.  Under A1 row t feeds
    X_t; under A2 row u = t - j feeds the lag-j term of X_t.
    """
    if HAVE_NUMBA:
        return _ar_paths_nb(R, B, bool(a1))
    return ar_paths_numpy(R, B, bool(a1))


@njit(nogil=True)
def _geometric_paths_nb(Z, B, beta, a1):
    n, T1 = Z.shape
    X = np.zeros((n, T1))
    Xm = np.zeros((n, T1))
    for r in range(n):
        X[r, 0] = B[r, 0]
        Xm[r, 0] = B[r, 0]
        s = 0.0
        for t in range(1, T1):
            if a1:
                s = beta * X[r, t - 1] + beta * s
                X[r, t] = B[r, t] + Z[r, t] * s
            else:
                s = beta * Z[r, t] * X[r, t - 1] + beta * s
                X[r, t] = B[r, t] + s
                Xm[r, t] = B[r, t] - beta * B[r, t - 1] + beta * (1.0 + Z[r, t]) * Xm[r, t - 1]
    return X, Xm


def geometric_paths_numpy(Z, B, beta, a1):
    n, T1 = Z.shape
    X = np.zeros((n, T1))
    Xm = np.zeros((n, T1))
    X[:, 0] = B[:, 0]
    Xm[:, 0] = B[:, 0]
    s = np.zeros(n)
    for t in range(1, T1):
        if a1:
            s = beta * X[:, t - 1] + beta * s
            X[:, t] = B[:, t] + Z[:, t] * s
        else:
            s = beta * Z[:, t] * X[:, t - 1] + beta * s
            X[:, t] = B[:, t] + s
            Xm[:, t] = B[:, t] - beta * B[:, t - 1] + beta * (1.0 + Z[:, t]) * Xm[:, t - 1]
    return X, Xm


def geometric_paths(Z, B, beta, a1):
    """Geometric-weight paths in O(1) per step plus (A2 only) the Markov path."""
    if HAVE_NUMBA:
        return _geometric_paths_nb(Z, B, float(beta), bool(a1))
    return geometric_paths_numpy(Z, B, float(beta), bool(a1))
