"""Critical parameters for geometric weights and the GARCH(1,1) region scan.

The geometric family ``A_j = beta^j Z`` (GARCH(1,1) in ARCH(inf) form) has
closed forms for every criterion; the functions here compute each criterion
through the general machinery (oracle, pair-sum DP) and offer the closed forms
as the independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import first_moment, pair_sum
from .dist import ChiSquare1, Constant, Scaled, ScalarDist, shifted_moment
from .model import A2, FiniteSingleFactor, GeometricFactor, ModelSpec, NoiseSpec, build_oracle

CRITERIA = ("phi1", "phi1_tilde", "phi2", "phi2_tilde", "exact")
GRID_POINTS = 32
GRID_LOGIT = (-28.0, 14.0)
BISECT_TOL = 1e-10

# Which side of the exact critical value each criterion lies on, per phase
# of theta: sufficient conditions give smaller critical betas.
def sides(theta: float):
    """``(sufficient, necessary)`` criterion names for this ``theta``."""
    if theta <= 1:
        return ("phi1", "phi2"), ("phi1_tilde", "phi2_tilde")
    if theta <= 2:
        return ("phi1_tilde", "phi2"), ("phi1", "phi2_tilde")
    return ("phi1_tilde", "phi2_tilde"), ("phi1", "phi2")


class BracketError(ValueError):
    """No sign change on the bracket."""


class CriticalBoundary(RuntimeError):
    """The criterion has one sign on the whole search interval."""

    def __init__(self, msg, sign):
        super().__init__(msg)
        self.sign = sign


class NonMonotone(RuntimeError):
    """The criterion is not monotone in beta on the check grid."""


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float = BISECT_TOL,
                flo: float = None, fhi: float = None) -> float:
    """Bisection to a bracket of width ``<= tol``; returns its midpoint.

    Uses at most ``ceil(log2((hi - lo) / tol)) + 2`` evaluations (fewer when
    ``f(lo)`` or ``f(hi)`` are supplied).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if not lo < hi:
        raise ValueError("need lo < hi")
    flo = f(lo) if flo is None else flo
    fhi = f(hi) if fhi is None else fhi
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if not (flo < 0) ^ (fhi < 0) or math.isnan(flo) or math.isnan(fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f = {flo}, {fhi}")
    neg_lo = flo < 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == neg_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Criterion values as functions of beta
# --------------------------------------------------------------------------

def geometric_oracle(beta: float, Z: ScalarDist, assumption: str = A2):
    return build_oracle(ModelSpec(assumption, GeometricFactor(beta, Z), NoiseSpec(Constant(1.0 / (1.0 - beta)))))


def _closed_sum_log(oracle, theta, transform, controls):
    res = pair_sum.closed_pair_sum(oracle, theta, transform, controls)
    if res.diverged:
        return math.inf
    if res.lower_bound and res.value >= 1.0:
        return math.inf
    if not res.converged:
        return math.nan
    return math.log(res.value)


_SIGN_CONTROLS = pair_sum.DPControls(stop_above=1.0)


def criterion_function(criterion: str, theta: float, Z: ScalarDist,
                       controls: pair_sum.DPControls = _SIGN_CONTROLS) -> Callable[[float], float]:
    """``beta -> value`` whose sign is that of the named criterion.

    The pair-sum criteria stop as soon as a lower bound reaches 1 and then
    return ``+inf``; only the sign is meaningful there.
    """
    if criterion == "exact":
        m = shifted_moment(Z, 1.0, theta)
        lm = math.log(m)
        return lambda beta: theta * math.log(beta) + lm
    if criterion == "phi1":
        return lambda beta: first_moment.phi1(geometric_oracle(beta, Z), theta)
    if criterion == "phi1_tilde":
        return lambda beta: first_moment.phi1_tilde(geometric_oracle(beta, Z), theta)
    if criterion == "phi2":
        return lambda beta: _closed_sum_log(geometric_oracle(beta, Z), theta, pair_sum.PHI2, controls)
    if criterion == "phi2_tilde":
        return lambda beta: _closed_sum_log(geometric_oracle(beta, Z), theta, pair_sum.PHI2_TILDE, controls)
    raise ValueError(f"unknown criterion {criterion!r}")


def closed_form_value(criterion: str, theta: float, beta: float, Z: ScalarDist) -> float:
    """Closed-form criterion value for ``A_j = beta^j Z``."""
    m = Z.moment(theta)
    if criterion == "exact":
        return math.log(shifted_moment(Z, 1.0, theta)) + theta * math.log(beta)
    if criterion == "phi1":
        q = beta**theta
        return math.log(q * m / (1.0 - q))
    if criterion == "phi1_tilde":
        return math.log(beta * m ** (1.0 / theta) / (1.0 - beta))
    h = Z.moment(theta / 2)
    if criterion == "phi2":
        q = beta**theta
        den = 1.0 - q * (1.0 + 2.0 * h)
        return math.inf if den <= 0 else math.log(q * m / den)
    if criterion == "phi2_tilde":
        q = beta * beta
        den = 1.0 - q * (1.0 + 2.0 * h ** (2.0 / theta))
        return math.inf if den <= 0 else math.log(q * m ** (2.0 / theta) / den)
    raise ValueError(f"unknown criterion {criterion!r}")


def closed_form_critical(criterion: str, theta: float, Z: ScalarDist) -> float:
    """Closed-form critical beta for ``A_j = beta^j Z``."""
    m = Z.moment(theta)
    if criterion == "exact":
        return shifted_moment(Z, 1.0, theta) ** (-1.0 / theta)
    if criterion == "phi1":
        return (1.0 / (1.0 + m)) ** (1.0 / theta)
    if criterion == "phi1_tilde":
        return 1.0 / (1.0 + m ** (1.0 / theta))
    h = Z.moment(theta / 2)
    if criterion == "phi2":
        return (1.0 / (1.0 + 2.0 * h + m)) ** (1.0 / theta)
    if criterion == "phi2_tilde":
        return (1.0 / (m ** (2.0 / theta) + 1.0 + 2.0 * h ** (2.0 / theta))) ** 0.5
    raise ValueError(f"unknown criterion {criterion!r}")


# --------------------------------------------------------------------------
# Critical beta
# --------------------------------------------------------------------------

def beta_grid(n: int = GRID_POINTS) -> np.ndarray:
    s = np.linspace(GRID_LOGIT[0], GRID_LOGIT[1], n)
    return 1.0 / (1.0 + np.exp(-s))


def check_monotone(betas, values):
    """Raise :class:`NonMonotone` unless ``values`` is non-decreasing along ``betas``.

    Infinite values count as larger than every finite value; ``nan`` is a
    failure.
    """
    v = np.asarray(values, dtype=float)
    if np.isnan(v).any():
        bad = [float(b) for b, x in zip(betas, v) if math.isnan(x)]
        raise NonMonotone(f"criterion undefined at beta = {bad}")
    for i in range(1, v.shape[0]):
        a, b = v[i - 1], v[i]
        if b == math.inf:
            continue
        if a == math.inf or b < a - 1e-12 * max(1.0, abs(a)):
            raise NonMonotone(
                f"criterion decreases between beta = {betas[i - 1]!r} ({a!r}) and {betas[i]!r} ({b!r})"
            )


def critical_beta(criterion: str, theta: float, Z: ScalarDist, method: str = "machinery",
                  tol: float = BISECT_TOL) -> float:
    """The beta in (0, 1) where the named criterion crosses 0 for ``A_j = beta^j Z``."""
    if theta <= 0:
        raise ValueError("theta must be > 0")
    if method == "closed":
        return closed_form_critical(criterion, theta, Z)
    if method != "machinery":
        raise ValueError(f"unknown method {method!r}")
    f = criterion_function(criterion, theta, Z)
    betas = beta_grid()
    vals = [f(float(b)) for b in betas]
    check_monotone(betas, vals)
    neg = [i for i, v in enumerate(vals) if v < 0]
    if not neg:
        raise CriticalBoundary(f"{criterion} is non-negative on the whole grid", +1)
    if neg[-1] == len(vals) - 1:
        raise CriticalBoundary(f"{criterion} is negative on the whole grid", -1)
    i = neg[-1]
    lo, hi = float(betas[i]), float(betas[i + 1])
    return bisect_root(f, lo, hi, tol * min(1.0, hi), vals[i], vals[i + 1])


@dataclass
class SweepRow:
    theta: float
    beta_phi1: float = math.nan
    beta_phi1_tilde: float = math.nan
    beta_phi2: float = math.nan
    beta_phi2_tilde: float = math.nan
    beta_exact: float = math.nan
    flags: list = field(default_factory=list)

    def value(self, criterion):
        return getattr(self, f"beta_{criterion}")


def theta_sweep(thetas=None, Z: ScalarDist = None, method: str = "machinery"):
    """One row of critical betas per ``theta``; failures are flagged, not dropped."""
    thetas = default_thetas() if thetas is None else thetas
    Z = ChiSquare1() if Z is None else Z
    rows = []
    for th in thetas:
        th = float(th)
        row = SweepRow(th)
        for c in CRITERIA:
            try:
                setattr(row, f"beta_{c}", critical_beta(c, th, Z, method))
            except (CriticalBoundary, NonMonotone, BracketError, ArithmeticError, ValueError, RuntimeError) as exc:
                row.flags.append(f"{c}:{type(exc).__name__}")
        rows.append(row)
    return rows


def default_thetas():
    return [round(0.1 * i, 10) for i in range(1, 31)]


def check_ordering(row: SweepRow, tol: float = 1e-9):
    """Sufficient-side betas <= exact <= necessary-side betas (within ``tol``)."""
    suff, nec = sides(row.theta)
    ex = row.beta_exact
    bad = [c for c in suff if not row.value(c) <= ex + tol]
    bad += [c for c in nec if not row.value(c) >= ex - tol]
    return not bad, bad


# --------------------------------------------------------------------------
# GARCH(1,1) region scan at theta = 2
# --------------------------------------------------------------------------

Z0SQ_M2 = 3.0  # E[Z0^4] for a standard normal Z0


@dataclass
class RegionRow:
    alpha1: float
    beta1: float
    phi1_ok: bool
    phi2_ok: bool
    first_value: float = math.nan
    second_value: float = math.nan
    first_closed: float = math.nan
    second_closed: float = math.nan
    second_is_bound: bool = False

    @property
    def max_gap(self):
        """Largest machinery-vs-closed-form gap, scaled by ``max(1, |closed|)``.

        Near the boundary the closed-form denominators cancel, so large values
        are compared relatively.  A certified lower bound counts as a gap only
        by the amount it exceeds the closed form.
        """
        gaps = [0.0]
        pairs = [(self.first_value, self.first_closed)]
        if not self.second_is_bound:
            pairs.append((self.second_value, self.second_closed))
        elif math.isfinite(self.second_value) and math.isfinite(self.second_closed):
            gaps.append(max(0.0, self.second_value - self.second_closed) / max(1.0, self.second_closed))
        for a, b in pairs:
            if math.isfinite(a) and math.isfinite(b):
                gaps.append(abs(a - b) / max(1.0, abs(b)))
            elif math.isfinite(a) != math.isfinite(b):
                gaps.append(math.inf)
        return max(gaps)


def garch_closed_forms(alpha1: float, beta1: float):
    """``(sqrt(3) a + b, 3 a^2 + 2 a b + b^2)``; each condition holds when its value is < 1."""
    f1 = math.sqrt(Z0SQ_M2) * alpha1 + beta1
    f2 = Z0SQ_M2 * alpha1**2 + 2 * alpha1 * beta1 + beta1**2
    return f1, f2


_SCAN_CONTROLS = pair_sum.DPControls(stop_above=1.0)


def garch_point(alpha1: float, beta1: float, controls: pair_sum.DPControls = _SCAN_CONTROLS) -> RegionRow:
    """Classify one GARCH(1,1) parameter point by the two sufficient conditions at theta = 2.

    ``phi1_ok`` is the first-moment condition ``phi1_tilde(2) < 0`` and
    ``phi2_ok`` the pair-sum condition ``phi2(2) < 0`` for the ARCH(inf) form
    ``A_j = beta1^j (alpha1 / beta1) Z0^2``.  ``first_value`` is
    ``exp(phi1_tilde(2))`` and ``second_value`` the closed-pair sum; the
    ``*_closed`` fields hold the same quantities from the closed forms.  With
    the default controls the pair sum stops at a certified lower bound once
    that bound reaches 1 (``second_is_bound``); ``inf`` marks divergence.
    """
    a, b = float(alpha1), float(beta1)
    if a < 0 or b < 0:
        raise ValueError("alpha1 and beta1 must be >= 0")
    denom = 1.0 - b * b - 2 * a * b
    c1 = math.sqrt(Z0SQ_M2) * a / (1.0 - b) if b < 1 else math.inf
    c2 = Z0SQ_M2 * a * a / denom if denom > 0 else math.inf
    if a == 0:
        # No random coefficients: sigma^2 follows a deterministic AR(1).
        return RegionRow(a, b, b < 1, b * b < 1, c1, c2, c1, c2)
    if b >= 1:
        return RegionRow(a, b, False, False, math.inf, math.inf, c1, c2)
    if b == 0:
        o = build_oracle(ModelSpec(A2, FiniteSingleFactor([a], ChiSquare1())))
    else:
        o = build_oracle(ModelSpec(A2, GeometricFactor(b, Scaled(a / b, ChiSquare1()))))
    v1 = math.exp(first_moment.phi1_tilde(o, 2.0))
    res = pair_sum.closed_pair_sum(o, 2.0, pair_sum.PHI2, controls)
    bound = False
    if res.diverged:
        v2 = math.inf
    elif res.lower_bound and res.value >= 1.0:
        # Truncated and partial sums are lower bounds, so one >= 1 settles the sign.
        v2, bound = res.value, True
    elif not res.converged:
        raise pair_sum.NonConvergence(f"closed-pair sum at ({a}, {b}) did not converge", res)
    else:
        v2 = res.value
    return RegionRow(a, b, v1 < 1, v2 < 1, v1, v2, c1, c2, bound)


def garch_region_scan(alphas=None, betas=None, controls: pair_sum.DPControls = _SCAN_CONTROLS):
    """Region table over a grid (default: step 0.01 on [0, 1] x [0, 1])."""
    grid = [round(0.01 * i, 10) for i in range(101)]
    alphas = grid if alphas is None else alphas
    betas = grid if betas is None else betas
    return [garch_point(a, b, controls) for a in alphas for b in betas]
