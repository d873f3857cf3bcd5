"""Companion-matrix criteria for finite order ``p``.

``E[A (x) A]`` uses the block index ``(i - 1) p + k`` for the pair ``(i, k)``.
Dense matrices only; ``p <= 64``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .first_moment import FINITE, INCONCLUSIVE, INFINITE, CriterionReport
from .model import A1, FiniteIndependent, FiniteSingleFactor, MomentOracle

MAX_ORDER = 64
POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000
GELFAND_STEPS = 12
GELFAND_RTOL = 1e-8
PIVOT_WARN = 1e-12


class SpectralError(RuntimeError):
    """Spectral radius computation failed or its two estimates disagree."""


class ConditioningWarning(UserWarning):
    """Small pivot ratio in a linear solve."""


def _finite_order(oracle: MomentOracle) -> int:
    if not oracle.finite:
        raise ValueError("matrix criteria need a finite-order model")
    p = oracle.order
    if p > MAX_ORDER:
        raise ValueError(f"order {p} exceeds the dense limit {MAX_ORDER}")
    return p


def expected_companion(oracle: MomentOracle) -> np.ndarray:
    """``E[A]``: means on the first row, ones on the subdiagonal."""
    p = _finite_order(oracle)
    K = np.zeros((p, p))
    K[0, :] = [oracle.marginal(j, 1.0) for j in range(1, p + 1)]
    K[np.arange(1, p), np.arange(p - 1)] = 1.0
    return K


def expected_kron(oracle: MomentOracle) -> np.ndarray:
    """``E[A (x) A]`` of size ``p^2 x p^2``."""
    p = _finite_order(oracle)
    mean = np.array([oracle.marginal(j, 1.0) for j in range(1, p + 1)])
    K = np.zeros((p * p, p * p))
    for i in range(1, p + 1):
        for k in range(1, p + 1):
            row = (i - 1) * p + (k - 1)
            for j in range(1, p + 1):
                for l in range(1, p + 1):
                    col = (j - 1) * p + (l - 1)
                    if i == 1 and k == 1:
                        v = oracle.joint(j, l, 2.0)
                    elif i == 1:
                        v = mean[j - 1] if k == l + 1 else 0.0
                    elif k == 1:
                        v = mean[l - 1] if i == j + 1 else 0.0
                    else:
                        v = 1.0 if (i == j + 1 and k == l + 1) else 0.0
                    K[row, col] = v
    return K


@dataclass
class RadiusResult:
    value: float
    iterations: int
    lower: float
    upper: float
    gelfand: float


def _check_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"need a square matrix, got shape {M.shape}")
    if (M < 0).any() or not np.isfinite(M).all():
        raise ValueError("matrix must be finite and entrywise non-negative")
    return M


def gelfand_estimate(M, steps: int = GELFAND_STEPS) -> float:
    """Ratio form of Gelfand's formula, ``(||M^{2n}|| / ||M^n||)^{1/n}`` with ``n = 2^steps``.

    Powers are renormalised after each squaring so nothing overflows.  The
    plain root ``||M^n||^{1/n}`` carries an ``O(log(C) / n)`` bias that is far
    above 1e-8 at n = 4096; the ratio cancels the constant.
    """
    M = _check_matrix(M)
    nrm = np.linalg.norm(M, np.inf)
    if nrm == 0:
        return 0.0
    Ak = M / nrm
    logs = [math.log(nrm)]
    for _ in range(steps + 1):
        sq = Ak @ Ak
        s = np.linalg.norm(sq, np.inf)
        if s == 0:
            return 0.0
        logs.append(2 * logs[-1] + math.log(s))
        Ak = sq / s
    n = 2 ** steps
    return math.exp((logs[-1] - logs[-2]) / n)


def spectral_radius_full(M, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> RadiusResult:
    """Power iteration with Collatz-Wielandt bounds on a shifted matrix.

    The shift ``s I`` with ``s = ||M||_inf / 2`` makes the iteration
    aperiodic; ``rho(M) = lambda - s``.  When the iteration stalls or
    disagrees with the Gelfand estimate, a dense eigenvalue estimate is used
    if it lies inside the final bracket; otherwise :class:`SpectralError`.
    """
    M = _check_matrix(M)
    n = M.shape[0]
    nrm = np.linalg.norm(M, np.inf)
    if nrm == 0:
        return RadiusResult(0.0, 0, 0.0, 0.0, 0.0)
    s = 0.5 * nrm
    A = M + s * np.eye(n)
    x = np.ones(n) / n
    prev = math.nan
    stable = 0
    lam = math.nan
    lo = hi = math.nan
    for it in range(1, max_iter + 1):
        y = A @ x
        ratio = y / x
        lo, hi = float(ratio.min()), float(ratio.max())
        est = float(y.sum() / x.sum())
        if hi - lo <= tol * hi:
            lam = 0.5 * (lo + hi)
            break
        # Reducible matrices can leave the bounds apart forever; accept a
        # norm-ratio estimate that has stopped moving.
        if abs(est - prev) <= tol * est:
            stable += 1
            if stable >= 20:
                lam = est
                break
        else:
            stable = 0
        prev = est
        x = y / y.sum()
        # Keep zero-pattern components away from exact zero (division above).
        x = np.maximum(x, 1e-300)
    else:
        # Defective dominant eigenvalue: the iteration converges like 1/k and
        # so does the Gelfand ratio.
        return _dense_fallback(M, lo - s, hi - s, tol * nrm, f"no convergence in {max_iter} steps")
    rho = max(lam - s, 0.0)
    gel = gelfand_estimate(M)
    scale = max(rho, gel, 1e-300)
    if abs(rho - gel) > GELFAND_RTOL * scale and abs(rho - gel) > tol * nrm:
        return _dense_fallback(M, lo - s, hi - s, tol * nrm, f"power {rho!r} vs Gelfand {gel!r}")
    return RadiusResult(rho, it, max(lo - s, 0.0), hi - s, gel)


def _dense_fallback(M, lo, hi, slack, why):
    """Dense eigenvalue estimate, accepted only inside the Collatz-Wielandt bracket ``[lo, hi]``."""
    eig = float(np.max(np.abs(np.linalg.eigvals(M))))
    if not lo - slack <= eig <= hi + slack:
        raise SpectralError(f"{why}; dense estimate {eig} outside the bracket [{lo}, {hi}]")
    rho = min(max(eig, lo, 0.0), hi)
    return RadiusResult(rho, POWER_MAX_ITER, max(lo, 0.0), hi, gelfand_estimate(M))


def spectral_radius(M) -> float:
    """Spectral radius of a non-negative square matrix."""
    return spectral_radius_full(M).value


def _solve(A, rhs):
    lu, piv = scipy.linalg.lu_factor(A)
    d = np.abs(np.diag(lu))
    if d.max() == 0 or d.min() / d.max() < PIVOT_WARN:
        warnings.warn("pivot ratio below 1e-12; solution may be inaccurate", ConditioningWarning, stacklevel=3)
    return scipy.linalg.lu_solve((lu, piv), rhs)


def kron_second_moment(oracle: MomentOracle) -> float:
    """``E[X^2]`` from ``(I - E[A (x) A])^{-1}`` under A1 with independent noise.

    With ``N = K1 (I - K1)^{-1}`` the noise-free part is
    ``M11 = e_0' (I - K2)^{-1} (I + I (x) N + N (x) I) e_0``; a random noise
    adds ``Var(B) [(I - K2)^{-1}]_{00}``.
    """
    p = _finite_order(oracle)
    if oracle.spec.assumption != A1 or not oracle.spec.noise_independent:
        raise ValueError("the Kronecker second moment needs A1 with independent noise")
    K1 = expected_companion(oracle)
    K2 = expected_kron(oracle)
    if spectral_radius(K1) >= 1 or spectral_radius(K2) >= 1:
        return math.inf
    e = np.zeros(p)
    e[0] = 1.0
    Ne = K1 @ _solve(np.eye(p) - K1, e)
    v = np.zeros(p * p)
    v[0] = 1.0
    v += np.kron(e, Ne) + np.kron(Ne, e)
    I2 = np.eye(p * p)
    x = _solve(I2 - K2, np.column_stack([v, I2[:, 0]]))
    m1, m2 = oracle.noise(1.0), oracle.noise(2.0)
    return float(m1 * m1 * x[0, 0] + (m2 - m1 * m1) * x[0, 1])


def positive_coefficients(oracle: MomentOracle) -> bool:
    """Every coefficient is almost surely positive."""
    f = oracle.family
    if isinstance(f, FiniteIndependent):
        return all(d.surely_positive() for d in f.dists)
    if isinstance(f, FiniteSingleFactor):
        return all(w > 0 for w in f.weights) and f.factor.surely_positive()
    return False


def hypotheses(oracle: MomentOracle) -> dict:
    """Checklist of the hypotheses under which the Kronecker test is exact."""
    spec = oracle.spec
    return {
        "row_iid_A1": spec.assumption == A1,
        "finite_order": oracle.finite,
        "positive_coefficients": oracle.finite and positive_coefficients(oracle),
        "noise_independent_finite_second_moment": spec.noise_independent and math.isfinite(oracle.noise(2.0)),
    }


def nq_criterion(oracle: MomentOracle) -> CriterionReport:
    """Finiteness of ``E[X^2]`` from ``rho(E[A (x) A]) < 1``.

    ``rho < 1`` gives a finite second moment under A1 with independent noise
    of finite variance; ``rho >= 1`` proves an infinite one only when all
    coefficients are also almost surely positive.
    """
    _finite_order(oracle)
    hyp = hypotheses(oracle)
    rho = spectral_radius(expected_kron(oracle))
    rep = CriterionReport(INCONCLUSIVE, 2.0, values={"spectral_radius": rho})
    rep.caveats = [k for k, ok in hyp.items() if not ok]
    if abs(rho - 1.0) <= 1e-12:
        rep.flags.append("boundary")
    base = hyp["row_iid_A1"] and hyp["noise_independent_finite_second_moment"]
    if rho < 1 and base and "boundary" not in rep.flags:
        rep.verdict = FINITE
        rep.justification.append("kron_radius_lt_1")
    elif rho >= 1 and base and hyp["positive_coefficients"]:
        rep.verdict = INFINITE
        rep.justification.append("kron_radius_ge_1_positive_coefficients")
    return rep


def jensen_lemma_check(oracle: MomentOracle, slack: float = -1e-10):
    """Check ``rho(E[A]) <= sqrt(rho(E[A (x) A]))``; returns ``(ok, rho_mean, rho_kron)``."""
    r1 = spectral_radius(expected_companion(oracle))
    r2 = spectral_radius(expected_kron(oracle))
    return bool(math.sqrt(r2) - r1 >= slack), r1, r2
