"""First-moment criteria ``phi1``, ``phi1_tilde`` and their verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import MomentOracle

FINITE = "finite"
INFINITE = "infinite"
INCONCLUSIVE = "inconclusive"

BOUNDARY_TOL = 1e-12


@dataclass
class CriterionReport:
    """A verdict together with the clauses and numbers that justify it.

    ``justification`` names the clauses whose inequalities hold for the
    recorded ``values``; ``flags`` carries notes such as ``"boundary"``.
    """

    verdict: str
    theta: float
    justification: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    caveats: list = field(default_factory=list)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "theta": self.theta,
            "justification": list(self.justification),
            "values": {k: _json_num(v) for k, v in self.values.items()},
            "flags": list(self.flags),
            "caveats": list(self.caveats),
        }


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _log(x):
    if x == 0:
        return -math.inf
    return math.log(x)


def sign_class(value, tol=BOUNDARY_TOL):
    """Classify a criterion value as ``"neg"``, ``"nonneg"`` or ``"boundary"``.

    Exact zero and anything above it count as non-negative (the criteria use
    weak inequalities on that side).  Values in ``[-tol, 0)`` are too close to
    call and are reported as boundary.
    """
    if value is None or math.isnan(value):
        return None
    if value >= 0:
        return "nonneg"
    if value < -tol:
        return "neg"
    return "boundary"


def phi1(oracle: MomentOracle, theta: float) -> float:
    """``log sum_j E[A_j^theta]``; ``+inf`` if the series diverges."""
    return _log(oracle.series(theta, 1.0))


def phi1_tilde(oracle: MomentOracle, theta: float) -> float:
    """``log sum_j E[A_j^theta]^{1/theta}``; ``+inf`` if the series diverges."""
    return _log(oracle.series(theta, 1.0 / theta))


def mean_exact(oracle: MomentOracle) -> float:
    """``E[X] = E[B] / (1 - sum_j E[A_j])``, or ``+inf`` when the sum is >= 1."""
    s = oracle.series(1.0, 1.0)
    if s >= 1:
        return math.inf
    return oracle.noise(1.0) / (1.0 - s)


def theorem1_verdict(oracle: MomentOracle, theta: float) -> CriterionReport:
    """First-moment-method verdict for ``E[X^theta]``.

    Finite when the series criterion of the matching phase is negative and
    the noise moment is finite; infinite when the complementary criterion is
    non-negative or the noise moment is infinite.
    """
    p1 = phi1(oracle, theta)
    p1t = phi1_tilde(oracle, theta)
    nb = oracle.noise(theta)
    rep = CriterionReport(
        INCONCLUSIVE, theta, values={"phi1": p1, "phi1_tilde": p1t, "noise_moment": nb}
    )
    s1, s1t = sign_class(p1), sign_class(p1t)
    noise_ok = math.isfinite(nb)
    if "boundary" in (s1, s1t) or abs(p1) <= BOUNDARY_TOL or abs(p1t) <= BOUNDARY_TOL:
        rep.flags.append("boundary")

    if not noise_ok:
        rep.verdict = INFINITE
        rep.justification.append("noise_moment_infinite")
        return rep
    if theta >= 1 and s1 == "nonneg":
        rep.verdict = INFINITE
        rep.justification.append("phi1_nonneg_theta_ge_1")
    elif theta < 1 and s1t == "nonneg":
        rep.verdict = INFINITE
        rep.justification.append("phi1_tilde_nonneg_theta_lt_1")
    elif theta <= 1 and s1 == "neg":
        rep.verdict = FINITE
        rep.justification.append("phi1_neg_theta_le_1")
    elif theta >= 1 and s1t == "neg":
        rep.verdict = FINITE
        rep.justification.append("phi1_tilde_neg_theta_ge_1")
    return rep
