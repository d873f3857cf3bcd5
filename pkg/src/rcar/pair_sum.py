"""Closed and open pair sums, ``phi2``, ``phi2_tilde`` and second-moment verdicts.

Paths are strictly increasing integer sequences starting at 0; a jump of size
``k`` carries a coefficient ``A_k``.  A pair of paths is *closed* when both end
at a common ``m > 0`` and share no interior point, and *open* when it shares no
point other than 0.

Gap-state recursion
-------------------
Enumerate a closed pair by always advancing the path whose current endpoint
is smaller.  After the two first jumps ``(i, j)`` with ``i != j`` the state is
the gap ``d = |i - j|`` between the endpoints.  The trailing path jumps by
``k``: ``k < d`` keeps the leader, ``k > d`` swaps leader and trailer, ``k = d``
closes the pair.  Interior points can never coincide because every landing
point other than the closing one is strictly between or beyond the two
endpoints.  Every jump except the first two starts at a time no other jump
starts from, so under A1 it carries a marginal weight ``b_k`` while the first
two carry the joint weight ``c_ij``.  Hence

    S = sum_i c_ii + sum_{i != j} c_ij F(|i - j|),
    F(d) = b_d + sum_{d'} M[d, d'] F(d'),
    M[d, d'] = b_{d + d'} 1{d + d' <= P} + b_{d - d'} 1{d' < d}.

Under A2 the joint weight sits on the two jumps into the common endpoint;
reversing time maps closed pairs onto closed pairs and swaps the two
factorizations, so the sum is the same.  The brute-force enumerators below
implement both factorizations independently.

Open pairs follow the same recursion with the closing jump replaced by "the
trailing path stops": ``G(d) = H + (M G)(d)`` with ``H = 1 / (1 - sum_k b_k)``
the total weight of a free continuation of the leader.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import kernels
from .first_moment import (
    FINITE,
    INCONCLUSIVE,
    INFINITE,
    CriterionReport,
    phi1,
    phi1_tilde,
    sign_class,
    theorem1_verdict,
)
from .model import A1, A2, GeometricFactor, MomentOracle

PHI2 = "phi2"
PHI2_TILDE = "phi2_tilde"


class UnsupportedModel(ValueError):
    """The requested computation needs structure the model does not have."""


class InternalInconsistency(RuntimeError):
    """Two criteria that cannot both hold returned opposite verdicts."""


class NonConvergence(RuntimeError):
    """Truncation or iteration budget exhausted; ``result`` holds the partial value."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class PairWeights:
    """Weights of the gap recursion.

    ``b[k-1] = E[A_k^{theta/2}]^r`` and ``c[i-1, j-1] = E[A_i^{theta/2} A_j^{theta/2}]^r``.
    """

    P: int
    b: np.ndarray
    c: np.ndarray
    r: float
    theta: float

    @property
    def b_padded(self):
        return np.concatenate(([0.0], self.b))


@dataclass
class SumResult:
    value: float
    converged: bool
    truncation_order: int
    iterations: int = 0
    tail_estimate: float = 0.0
    lower_bound: bool = False
    method: str = ""
    shells: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def diverged(self):
        return self.value == math.inf


@dataclass(frozen=True)
class DPControls:
    """Solver knobs for the gap recursion and the truncation loop.

    ``method`` is ``"auto"`` (dense solve for small systems, otherwise
    certified iteration falling back to a dense solve when the certified
    contraction rate is too slow), ``"iterate"`` or ``"direct"``.  ``stop_above`` ends the computation as soon as a certified
    lower bound reaches that value.
    """

    rtol: float = 1e-14
    max_iter: int = 100_000
    cap: float = 1e12
    method: str = "auto"
    stop_above: float = None
    trunc_start: int = 32
    trunc_max: int = 4096
    trunc_rtol: float = 1e-10


DEFAULT_CONTROLS = DPControls()
DIRECT_MAX = 256


def _exponent(transform, theta):
    if transform == PHI2:
        return 1.0
    if transform == PHI2_TILDE:
        return 2.0 / theta
    raise ValueError(f"unknown transform {transform!r}")


def weights_for(oracle: MomentOracle, theta: float, transform: str = PHI2, P: int = None) -> PairWeights:
    """Fill ``b`` and ``c`` for truncation ``P`` (the exact order for finite models)."""
    if theta <= 0:
        raise ValueError("theta must be > 0")
    r = _exponent(transform, theta)
    if oracle.finite:
        P = oracle.order
    elif P is None or P < 1:
        raise ValueError("infinite-order model needs a truncation P >= 1")
    b = oracle.b_vector(theta, r, P)[1:]
    c = oracle.c_matrix(theta, r, P)
    return PairWeights(int(P), b, c, r, float(theta))


# --------------------------------------------------------------------------
# Gap recursion solver
# --------------------------------------------------------------------------

def _cw_bounds(delta, nxt):
    """Collatz-Wielandt ratios of ``nxt = M delta`` against ``delta``."""
    pos = delta > 0
    if not pos.any():
        return 0.0, 0.0
    if (nxt[~pos] > 0).any():
        hi = math.inf
    else:
        hi = float(np.max(nxt[pos] / delta[pos]))
    lo = float(np.min(nxt[pos] / delta[pos]))
    return lo, hi


def solve_gap(bp: np.ndarray, rhs: np.ndarray, score: np.ndarray, base: float, ctl: DPControls = DEFAULT_CONTROLS):
    """Minimal non-negative solution of ``F = rhs + M F`` and ``base + score . F``.

    Returns ``(F, SumResult)``; ``F`` is ``None`` on divergence.  The
    iteration ``F_{n+1} = rhs + M F_n`` adds ``Delta_n = M^n rhs``.  If
    ``M Delta_n <= h Delta_n`` with ``h < 1`` the remaining tail is at most
    ``Delta_{n+1} / (1 - h)``; if ``M Delta_n >= l Delta_n`` with ``l >= 1``
    the series diverges.  ``"auto"`` solves systems of size up to
    ``DIRECT_MAX`` densely, where a factorization is cheaper than iterating.
    """
    P = bp.shape[0] - 1
    n = rhs.shape[0]
    method = ctl.method
    if n == 0 or not rhs.any():
        return np.zeros(n), SumResult(float(base), True, P, method="trivial")

    if method == "iterate" or (method == "auto" and n > DIRECT_MAX):
        F = np.zeros(n)
        delta = rhs.copy()
        budget = max(200, n // 8)
        for it in range(1, ctl.max_iter + 1):
            F += delta
            S = base + float(score @ F)
            if S > ctl.cap or not math.isfinite(S):
                return None, SumResult(math.inf, False, P, it, method="iterate",
                                       diagnostics={"reason": "sum cap"})
            if ctl.stop_above is not None and S >= ctl.stop_above:
                return F, SumResult(S, False, P, it, lower_bound=True, method="iterate",
                                    diagnostics={"reason": "stop_above"})
            nxt = kernels.gap_matvec(bp, delta)
            lo, hi = _cw_bounds(delta, nxt)
            if lo >= 1.0:
                return None, SumResult(math.inf, False, P, it, method="iterate",
                                       diagnostics={"reason": "certified growth", "rate_lower": lo})
            if hi < 1.0:
                tail = float(score @ nxt) / (1.0 - hi)
                if tail <= ctl.rtol * S:
                    return F, SumResult(S, True, P, it, tail, method="iterate",
                                        diagnostics={"rate_upper": hi})
                if method == "auto" and it >= 16:
                    need = math.log(ctl.rtol * S / tail) / math.log(hi) if hi > 0 else 0
                    if need > budget:
                        break
            elif method == "auto" and it >= 64:
                break
            if not nxt.any():
                return F, SumResult(base + float(score @ F), True, P, it, method="iterate")
            delta = nxt
        else:
            return None, SumResult(math.inf, False, P, ctl.max_iter, method="iterate",
                                   diagnostics={"reason": "iteration cap"})

    # Dense solve.  I - M is non-singular and the solution is non-negative
    # exactly when the minimal solution is finite, and then the two coincide.
    M = kernels.gap_matrix(bp)
    A = np.eye(n) - M
    try:
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
        F = scipy.linalg.lu_solve((lu, piv), rhs)
    except (np.linalg.LinAlgError, ValueError):
        return None, SumResult(math.inf, False, P, method="direct", diagnostics={"reason": "singular"})
    if not np.all(np.isfinite(F)):
        return None, SumResult(math.inf, False, P, method="direct", diagnostics={"reason": "singular"})
    fmax = float(np.max(np.abs(F)))
    if F.min() < -1e-10 * max(fmax, 1.0):
        return None, SumResult(math.inf, False, P, method="direct",
                               diagnostics={"reason": "no non-negative solution"})
    F = np.maximum(F, 0.0)
    S = base + float(score @ F)
    if not S <= ctl.cap:
        return None, SumResult(math.inf, False, P, method="direct", diagnostics={"reason": "sum cap"})
    resid = float(np.max(np.abs(A @ F - rhs))) / max(fmax, 1e-300)
    return F, SumResult(S, True, P, method="direct", diagnostics={"relative_residual": resid})


def _offdiag_score(c):
    """``2 * sum_i c[i, i+d]`` for d = 1..P-1 (the symmetric off-diagonal mass)."""
    P = c.shape[0]
    return np.array([2.0 * np.trace(c, offset=d) for d in range(1, P)]) if P > 1 else np.zeros(0)


def closed_pair_sum_dp(w: PairWeights, controls: DPControls = DEFAULT_CONTROLS) -> SumResult:
    """Sum over closed pairs of the factorized weights for one truncation."""
    if w.P < 1:
        raise ValueError("empty model: P must be >= 1")
    bp = w.b_padded
    rhs = bp[1 : w.P].copy()
    _, res = solve_gap(bp, rhs, _offdiag_score(w.c), float(np.trace(w.c)), controls)
    return res


# --------------------------------------------------------------------------
# Truncation control for infinite order
# --------------------------------------------------------------------------

def _with_truncation(oracle, compute, controls):
    """Run ``compute(P)`` with exact order, or with P doubling for infinite order."""
    if oracle.finite:
        return compute(oracle.order)
    P = controls.trunc_start
    prev = None
    while True:
        res = compute(P)
        if res.diverged or res.lower_bound:
            return res
        if prev is not None:
            change = abs(res.value - prev.value)
            res.tail_estimate = max(res.tail_estimate, change)
            if change <= controls.trunc_rtol * abs(res.value):
                return res
        if P >= controls.trunc_max:
            res.converged = False
            res.lower_bound = True
            res.diagnostics["reason"] = "truncation cap"
            return res
        prev = res
        P = min(2 * P, controls.trunc_max)


def closed_pair_sum(oracle: MomentOracle, theta: float, transform: str = PHI2,
                    controls: DPControls = DEFAULT_CONTROLS) -> SumResult:
    """Closed-pair sum with truncation control; the argument of ``log`` in ``phi2``."""

    def compute(P):
        res = closed_pair_sum_dp(weights_for(oracle, theta, transform, P), controls)
        if not oracle.finite:
            from .model import tail_mass

            res.diagnostics["tail_mass"] = tail_mass(oracle.spec, theta, P)
        return res

    return _with_truncation(oracle, compute, controls)


def _phi_from(res: SumResult) -> float:
    if res.diverged:
        return math.inf
    if res.lower_bound and not res.converged:
        if res.value >= 1.0:
            # A certified lower bound >= 1 settles the sign but not the value.
            raise NonConvergence("only a lower bound >= 1 is available", res)
        raise NonConvergence("closed-pair sum did not converge", res)
    return math.log(res.value)


def phi2(oracle: MomentOracle, theta: float, controls: DPControls = DEFAULT_CONTROLS) -> float:
    """``log`` of the closed-pair sum of ``E[A_s^{theta/2} A_t^{theta/2}]``."""
    return _phi_from(closed_pair_sum(oracle, theta, PHI2, controls))


def phi2_tilde(oracle: MomentOracle, theta: float, controls: DPControls = DEFAULT_CONTROLS) -> float:
    """``log`` of the closed-pair sum of ``E[A_s^{theta/2} A_t^{theta/2}]^{2/theta}``."""
    return _phi_from(closed_pair_sum(oracle, theta, PHI2_TILDE, controls))


# --------------------------------------------------------------------------
# Brute-force oracles
# --------------------------------------------------------------------------

def _oracle_tables(oracle, theta, r, P):
    # Filled entry by entry from the oracle, independent of weights_for.
    bt = np.zeros(P + 1)
    ct = np.zeros((P, P))
    for i in range(1, P + 1):
        bt[i] = oracle.marginal(i, theta / 2) ** r
        for j in range(1, P + 1):
            ct[i - 1, j - 1] = oracle.joint(i, j, theta) ** r
    return bt, ct


def _check_assumption(assumption):
    if assumption not in (A1, A2):
        raise ValueError(f"assumption must be 'A1' or 'A2', got {assumption!r}")
    return assumption == A1


def closed_pair_sum_bruteforce(w: PairWeights, oracle: MomentOracle, assumption: str, m_max: int,
                               guard: int = kernels.ENUM_GUARD) -> SumResult:
    """Exhaustive closed-pair sum over common endpoints ``m <= m_max``.

    ``shells[m]`` is the contribution of endpoint ``m``.  Under A1 the joint
    weight is taken on the two jumps leaving 0, under A2 on the two jumps
    into ``m``; all other jumps get marginal weights.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    a1 = _check_assumption(assumption)
    bt, ct = _oracle_tables(oracle, w.theta, w.r, w.P)
    shells, count = kernels.closed_shells(bt, ct, m_max, a1, guard)
    return SumResult(math.fsum(shells), False, w.P, count, _shell_tail(shells), True,
                     "bruteforce", shells)


def _shell_tail(shells):
    """Ratio extrapolation of the last two non-trivial shells."""
    if shells.shape[0] < 3:
        return 0.0
    a, b = shells[-2], shells[-1]
    if b == 0:
        return 0.0
    if a <= 0 or b >= a:
        return math.inf
    q = b / a
    return b * q / (1.0 - q)


def _noise_independent(oracle):
    if not oracle.spec.noise_independent:
        raise UnsupportedModel("exact open-pair sums need noise independent of the coefficients")


def open_pair_sum_bruteforce(oracle: MomentOracle, theta: float, assumption: str, m_max: int,
                             P: int = None, guard: int = kernels.ENUM_GUARD) -> SumResult:
    """Exhaustive open-pair sum over pairs whose largest point is ``<= m_max``.

    Weight of a pair: ``E[B^theta]`` for the trivial pair, otherwise
    ``E[B^{theta/2}]^2`` times the coefficient factor (joint on the two first
    jumps under A1 when both paths move, marginal everywhere else).
    """
    _noise_independent(oracle)
    a1 = _check_assumption(assumption)
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    if oracle.finite:
        P = oracle.order
    elif P is None:
        raise ValueError("infinite-order model needs a truncation P")
    bt, ct = _oracle_tables(oracle, theta, 1.0, P)
    if m_max == 0:
        shells, count = np.ones(1), 1
    else:
        shells, count = kernels.open_shells(bt, ct, m_max, a1, guard)
    shells = shells.copy()
    shells[0] *= oracle.noise(theta)
    shells[1:] *= oracle.noise(theta / 2) ** 2
    return SumResult(math.fsum(shells), False, P, count, _shell_tail(shells), True,
                     "bruteforce", shells)


# --------------------------------------------------------------------------
# Exact second moment
# --------------------------------------------------------------------------

@dataclass
class SecondMoment:
    """``E[X^2] = S_open / (1 - S_closed)`` with its ingredients.

    ``value`` is ``nan`` when only the bracket ``[lower, upper]`` is known.
    """

    value: float
    lower: float
    upper: float
    closed: float
    open: float
    method: str
    converged: bool = True


def open_pair_sum_dp(oracle: MomentOracle, assumption: str, P: int,
                     controls: DPControls = DEFAULT_CONTROLS) -> SumResult:
    """Open-pair sum at ``theta = 2`` for truncation ``P`` via the gap recursion."""
    _noise_independent(oracle)
    a1 = _check_assumption(assumption)
    w = weights_for(oracle, 2.0, PHI2, P)
    sb = float(np.sum(w.b))
    if sb >= 1.0:
        return SumResult(math.inf, False, w.P, method="dp", diagnostics={"reason": "mean series >= 1"})
    H = 1.0 / (1.0 - sb)
    first = w.c if a1 else np.outer(w.b, w.b)
    bp = w.b_padded
    rhs = np.full(w.P - 1, H)
    _, res = solve_gap(bp, rhs, _offdiag_score(first), 2.0 * (H - 1.0), replace(controls, stop_above=None))
    if res.diverged:
        return res
    res.value = oracle.noise(2.0) + oracle.noise(1.0) ** 2 * res.value
    return res


def second_moment_exact(oracle: MomentOracle, assumption: str = None, controls: DPControls = DEFAULT_CONTROLS,
                        method: str = "dp", m_max: int = 60,
                        guard: int = 20_000_000) -> SecondMoment:
    """Exact ``E[X^2]`` of the stationary solution (noise independent of coefficients).

    ``method="dp"`` solves the open-pair gap recursion.  ``method="bruteforce"``
    sums open pairs by enumeration, raising the depth until the shell tail
    estimate is below ``1e-8`` of the sum; if ``m_max`` or the pair-count
    ``guard`` is reached first, only the bracket ``[partial, partial + tail]``
    is returned.
    """
    _noise_independent(oracle)
    assumption = assumption or oracle.spec.assumption
    _check_assumption(assumption)
    if oracle.series(1.0) >= 1.0:
        return SecondMoment(math.inf, math.inf, math.inf, math.nan, math.inf, method)
    sc = closed_pair_sum(oracle, 2.0, PHI2, replace(controls, stop_above=1.0))
    if sc.diverged or sc.value >= 1.0:
        return SecondMoment(math.inf, math.inf, math.inf, sc.value, math.nan, method)
    if not sc.converged:
        raise NonConvergence("closed-pair sum did not converge", sc)
    S_c = sc.value
    if method == "dp":
        so = _with_truncation(oracle, lambda P: open_pair_sum_dp(oracle, assumption, P, controls), controls)
        if so.diverged:
            return SecondMoment(math.inf, math.inf, math.inf, S_c, math.inf, method)
        v = so.value / (1.0 - S_c)
        return SecondMoment(v, v, v, S_c, so.value, method, so.converged)
    if method != "bruteforce":
        raise ValueError(f"unknown method {method!r}")
    P = None if oracle.finite else sc.truncation_order
    so = None
    for m in range(8, m_max + 1, 4):
        try:
            cur = open_pair_sum_bruteforce(oracle, 2.0, assumption, m, P, guard)
        except kernels.EnumerationLimit:
            break
        so = cur
        if so.tail_estimate < 1e-8 * so.value:
            break
    if so is None:
        raise NonConvergence("open-pair enumeration exceeded its guard at the smallest depth")
    lo = so.value / (1.0 - S_c)
    hi = (so.value + so.tail_estimate) / (1.0 - S_c)
    ok = so.tail_estimate < 1e-8 * so.value
    return SecondMoment(lo if ok else math.nan, lo, hi, S_c, so.value, method, ok)


# --------------------------------------------------------------------------
# Verdicts
# --------------------------------------------------------------------------

def joint_series(oracle: MomentOracle, theta: float) -> float:
    """``sum_{i,j} E[A_i^{theta/2} A_j^{theta/2}]^{min(1, 2/theta)}``."""
    q = min(1.0, 2.0 / theta)
    f = oracle.family
    if isinstance(f, GeometricFactor):
        x = f.beta ** (theta * q / 2)
        return f.factor.moment(theta) ** q * (x / (1.0 - x)) ** 2
    p = oracle.order
    return math.fsum(oracle.joint(i, j, theta) ** q for i in range(1, p + 1) for j in range(1, p + 1))


def _phi_sign(res: SumResult):
    """Return ``(value, sign)``; for lower bounds the sign is known only when >= 0."""
    if res.diverged:
        return math.inf, "nonneg"
    if res.converged:
        v = math.log(res.value)
        return v, sign_class(v)
    if res.lower_bound and res.value >= 1.0:
        return math.log(res.value), "nonneg"
    return math.nan, None


def theorem2_verdict(oracle: MomentOracle, theta: float, assumption: str = None,
                     controls: DPControls = DEFAULT_CONTROLS) -> CriterionReport:
    """Second-moment-method verdict for ``E[X^theta]``."""
    assumption = assumption or oracle.spec.assumption
    _check_assumption(assumption)
    r2 = closed_pair_sum(oracle, theta, PHI2, controls)
    r2t = closed_pair_sum(oracle, theta, PHI2_TILDE, controls)
    v2, s2 = _phi_sign(r2)
    v2t, s2t = _phi_sign(r2t)
    if abs(theta - 2.0) == 0.0 and r2.converged and r2t.converged:
        # Same formula at theta = 2; keep one value so the two cannot disagree.
        v2t, s2t = v2, s2
    h1 = phi1(oracle, theta / 2)
    h1t = phi1_tilde(oracle, theta / 2)
    nb = oracle.noise(theta)
    js = joint_series(oracle, theta)
    rep = CriterionReport(INCONCLUSIVE, theta, values={
        "phi2": v2, "phi2_tilde": v2t, "phi1_half": h1, "phi1_tilde_half": h1t,
        "noise_moment": nb, "joint_series": js,
    })
    for name, r in ((PHI2, r2), (PHI2_TILDE, r2t)):
        if not (r.converged or r.diverged):
            rep.flags.append(f"{name}_lower_bound")
    if "boundary" in (s2, s2t, sign_class(h1), sign_class(h1t)):
        rep.flags.append("boundary")

    if theta >= 2 and s2 == "nonneg":
        rep.verdict = INFINITE
        rep.justification.append("phi2_nonneg_theta_ge_2")
        return rep
    if theta <= 2 and s2t == "nonneg":
        rep.verdict = INFINITE
        rep.justification.append("phi2_tilde_nonneg_theta_le_2")
        return rep
    side = None
    if theta <= 2 and sign_class(h1) == "neg" and s2 == "neg":
        side = "phi1_half_neg_and_phi2_neg_theta_le_2"
    elif theta >= 2 and sign_class(h1t) == "neg" and s2t == "neg":
        side = "phi1_tilde_half_neg_and_phi2_tilde_neg_theta_ge_2"
    if side is None:
        return rep
    if not math.isfinite(nb):
        rep.caveats.append("noise moment infinite")
        return rep
    if assumption == A1 and not math.isfinite(js):
        rep.caveats.append("joint series infinite")
        return rep
    rep.verdict = FINITE
    rep.justification.append(side)
    if assumption == A1:
        rep.justification.append("joint_series_finite")
    return rep


def combined_verdict(oracle: MomentOracle, theta: float, assumption: str = None,
                     controls: DPControls = DEFAULT_CONTROLS, extra=()) -> CriterionReport:
    """Strongest of the first- and second-moment verdicts (plus ``extra`` reports).

    Raises :class:`InternalInconsistency` if one says finite and another infinite.
    """
    reports = {"theorem1": theorem1_verdict(oracle, theta),
               "theorem2": theorem2_verdict(oracle, theta, assumption, controls)}
    for i, r in enumerate(extra):
        reports[f"extra{i}"] = r
    verdicts = {k: r.verdict for k, r in reports.items()}
    fin = [k for k, v in verdicts.items() if v == FINITE]
    inf = [k for k, v in verdicts.items() if v == INFINITE]
    if fin and inf:
        raise InternalInconsistency(f"contradictory verdicts: finite by {fin}, infinite by {inf}")
    out = CriterionReport(FINITE if fin else INFINITE if inf else INCONCLUSIVE, theta)
    for k in fin or inf:
        out.justification.extend(f"{k}:{j}" for j in reports[k].justification)
    for k, r in reports.items():
        for vk, vv in r.values.items():
            out.values.setdefault(vk, vv)
        out.flags.extend(f for f in r.flags if f not in out.flags)
    return out


# --------------------------------------------------------------------------
# k-tuples
# --------------------------------------------------------------------------

def ktuple_closed_sum_bruteforce(oracle: MomentOracle, theta: float, k: int, assumption: str = A2,
                                 m_max: int = 12, guard: int = kernels.ENUM_GUARD) -> SumResult:
    """Sum of ``E[prod_l A_{t^l}^{theta/k}]`` over closed k-tuples with endpoint ``<= m_max``.

    A closed k-tuple is k paths from 0 to a common ``m`` whose joint
    intersection is ``{0, m}`` (pairs of them may share interior points).  Each
    time point gets the subset of paths visiting it; under A2 the factor of a
    point is the joint moment of the jumps landing there, which is known when
    the point is labelled, so the enumeration can merge labelings that lead to
    the same vector of last points.  A1 is handled through time reversal,
    which maps closed k-tuples onto themselves and swaps the two groupings.

    ``diagnostics["certifies_infinite"]`` is set when the partial sum reaches
    1 with ``theta >= k`` (then ``E[X^theta] = inf`` for ``B = 1``).
    """
    if k not in (3, 4):
        raise ValueError("k must be 3 or 4")
    _check_assumption(assumption)
    if not oracle.finite:
        raise UnsupportedModel("k-tuple enumeration needs a finite-order model")
    P = oracle.order
    e = theta / k
    full = (1 << k) - 1

    @lru_cache(maxsize=None)
    def factor(lags):
        return oracle.group_moment(lags, e)

    shells = np.zeros(m_max + 1)
    states = {(0,) * k: 1.0}
    visited = 0
    for u in range(1, m_max + 1):
        nxt = {}
        for last, wgt in states.items():
            # Close at u: every path jumps into u.
            if all(u - x <= P for x in last):
                shells[u] += wgt * factor(tuple(sorted(u - x for x in last)))
                visited += 1
            if u == m_max:
                continue
            for mask in range(full):
                ok = True
                lags = []
                new = list(last)
                for l in range(k):
                    if mask >> l & 1:
                        lags.append(u - last[l])
                        new[l] = u
                    elif u + 1 - last[l] > P:
                        ok = False
                        break
                if not ok:
                    continue
                val = wgt * (factor(tuple(sorted(lags))) if lags else 1.0)
                if val == 0.0:
                    continue
                key = tuple(new)
                nxt[key] = nxt.get(key, 0.0) + val
                visited += 1
                if visited > guard:
                    raise kernels.EnumerationLimit(f"more than {guard} k-tuple states visited")
        states = nxt
    total = math.fsum(shells)
    res = SumResult(total, False, P, visited, _shell_tail(shells), True, "bruteforce", shells)
    res.diagnostics["certifies_infinite"] = bool(total >= 1.0 and theta >= k)
    return res
