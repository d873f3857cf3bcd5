import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from rcar import kernels
from rcar._accel import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not available")


def brute_closed(bt, ct, m, a1):
    """Sum over closed pairs ending at exactly m by listing every composition."""
    P = bt.shape[0] - 1

    def paths():
        for k in range(1, m + 1):
            for cuts in itertools.combinations(range(1, m), k - 1):
                pts = (0,) + cuts + (m,)
                if all(0 < pts[i + 1] - pts[i] <= P for i in range(len(pts) - 1)):
                    yield pts

    total = 0.0
    ps = list(paths())
    for s in ps:
        for t in ps:
            if set(s) & set(t) != {0, m}:
                continue
            if a1:
                w = ct[s[1] - 1, t[1] - 1]
                rest = [s[i + 1] - s[i] for i in range(1, len(s) - 1)] + [t[i + 1] - t[i] for i in range(1, len(t) - 1)]
            else:
                w = ct[m - s[-2] - 1, m - t[-2] - 1]
                rest = [s[i + 1] - s[i] for i in range(len(s) - 2)] + [t[i + 1] - t[i] for i in range(len(t) - 2)]
            for g in rest:
                w *= bt[g]
            total += w
    return total


@pytest.fixture
def tables():
    rng = np.random.default_rng(0)
    P = 3
    bt = np.concatenate(([0.0], rng.uniform(0.1, 0.4, P)))
    c = rng.uniform(0.05, 0.3, (P, P))
    return bt, (c + c.T) / 2


@pytest.mark.parametrize("a1", [True, False])
def test_closed_shells_match_listing(tables, a1):
    bt, ct = tables
    shells, _ = kernels.closed_shells(bt, ct, 8, a1, backend="numpy")
    for m in range(1, 9):
        assert shells[m] == pytest.approx(brute_closed(bt, ct, m, a1), rel=1e-12)


@needs_numba
@pytest.mark.parametrize("a1", [True, False])
def test_closed_and_open_shells_parity(tables, a1):
    bt, ct = tables
    a, na = kernels.closed_shells(bt, ct, 14, a1, backend="numba")
    b, nb = kernels.closed_shells(bt, ct, 14, a1, backend="numpy")
    assert na == nb and np.allclose(a, b, rtol=1e-13, atol=0)
    a, na = kernels.open_shells(bt, ct, 10, a1, backend="numba")
    b, nb = kernels.open_shells(bt, ct, 10, a1, backend="numpy")
    assert na == nb and np.allclose(a, b, rtol=1e-13, atol=0)


def test_enumeration_guard(tables):
    bt, ct = tables
    with pytest.raises(kernels.EnumerationLimit):
        kernels.closed_shells(bt, ct, 20, True, guard=1000)


@pytest.mark.parametrize("P", [5, 40, 300])
def test_gap_matvec_matches_dense(P):
    rng = np.random.default_rng(P)
    b = np.concatenate(([0.0], rng.uniform(0, 1, P)))
    x = rng.uniform(0, 1, P - 1)
    ref = kernels.gap_matrix(b) @ x
    assert np.allclose(kernels.gap_matvec(b, x), ref, rtol=1e-12)
    assert np.allclose(kernels.gap_matvec_numpy(b, x), ref, rtol=1e-12)


def test_gap_matrix_definition():
    b = np.array([0.0, 1.0, 2.0, 3.0])
    # Rows d = 1, 2; entries b[d+d'] (d+d' <= 3) + b[d-d'] (d' < d).
    assert kernels.gap_matrix(b).tolist() == [[2.0, 3.0], [3.0 + 1.0, 0.0]]


def direct_ar(R, B, a1):
    n, T1, p = R.shape
    X = np.zeros((n, T1))
    for r in range(n):
        for t in range(T1):
            X[r, t] = B[r, t] + sum(R[r, t if a1 else t - j, j - 1] * X[r, t - j] for j in range(1, min(t, p) + 1))
    return X


@pytest.mark.parametrize("a1", [True, False])
def test_ar_paths(a1):
    rng = np.random.default_rng(1)
    R = rng.uniform(0, 0.4, (3, 25, 3))
    B = rng.uniform(0.5, 1.5, (3, 25))
    ref = direct_ar(R, B, a1)
    assert np.allclose(kernels.ar_paths(R, B, a1), ref, rtol=1e-14)
    assert np.allclose(kernels.ar_paths_numpy(R, B, a1), ref, rtol=1e-14)


@pytest.mark.parametrize("a1", [True, False])
def test_geometric_paths_match_truncated_ar(a1):
    rng = np.random.default_rng(2)
    T1, beta = 30, 0.5
    Z = rng.uniform(0, 1, (2, T1))
    B = rng.uniform(0.5, 1.5, (2, T1))
    # AR(T1) rows: lag-j coefficient beta^j Z_row with row t (A1) or t - j + 1 (A2).
    R = np.zeros((2, T1, T1))
    j = np.arange(1, T1 + 1)
    for u in range(T1):
        if a1:
            R[:, u, :] = beta**j * Z[:, [u]]
        else:
            src = np.clip(u + 1, 0, T1 - 1)
            R[:, u, :] = beta**j * Z[:, [src]]
    X, Xm = kernels.geometric_paths(Z, B, beta, a1)
    X2, Xm2 = kernels.geometric_paths_numpy(Z, B, beta, a1)
    if a1:
        ref = direct_ar(R, B, True)
    else:
        ref = np.zeros_like(B)
        for t in range(T1):
            ref[:, t] = B[:, t] + sum(beta**k * Z[:, t - k + 1] * ref[:, t - k] for k in range(1, t + 1))
    assert np.allclose(X, ref, rtol=1e-13)
    assert np.allclose(X2, ref, rtol=1e-13)
    if not a1:
        assert np.allclose(Xm, Xm2, rtol=1e-14)


def test_numpy_backend_subprocess(tmp_path):
    code = (
        "import numpy as np, rcar\n"
        "from rcar import kernels\n"
        "assert rcar.backend() == 'numpy', rcar.backend()\n"
        "from rcar.model import build_oracle, ModelSpec, FiniteIndependent\n"
        "from rcar.dist import ScaledBernoulli\n"
        "from rcar.pair_sum import closed_pair_sum\n"
        "A = ScaledBernoulli(0.45, 2 / 3)\n"
        "o = build_oracle(ModelSpec('A1', FiniteIndependent((A, A))))\n"
        "print(repr(closed_pair_sum(o, 2.0).value))\n"
    )
    env = dict(os.environ, RCAR_DISABLE_NUMBA="1")
    r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, timeout=120)
    assert r.returncode == 0, r.stderr
    assert abs(float(r.stdout) - 2 * (0.2 + 0.027 / 0.7)) < 1e-12
