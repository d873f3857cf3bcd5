"""Monte Carlo for the recursion, moment estimates and the Hill tail index.

Random numbers
--------------
Replica ``r`` of a run with seed ``s`` draws from Philox4x64 keyed by
``(s, r)`` (see :class:`rcar.dist.RandomStream`), so results do not depend on
how replicas are split across threads.  Each time step consumes a fixed
block of uniforms: one per coefficient (or one for the shared factor) and
one for the noise.  All laws are sampled by their quantile function; with
``joint_row`` noise the noise reuses the uniform of the row's first
coefficient, giving a comonotone row.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from ._accel import backend
from .dist import RandomStream
from .model import A1, JOINT_ROW, FiniteIndependent, FiniteSingleFactor, GeometricFactor, ModelSpec

ENSEMBLE = "ensemble"
TIME_AVERAGE = "time_average"
MIN_SE_REPLICAS = 10
CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 300
    replicas: int = 10_000
    burn_in: int = 0
    seed: int = 0
    thetas: tuple = (1.0, 2.0)
    mode: str = ENSEMBLE
    threads: int = 1
    tail_fraction: float = None

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError("burn_in must satisfy 0 <= burn_in < horizon")
        if self.mode not in (ENSEMBLE, TIME_AVERAGE):
            raise ValueError(f"mode must be {ENSEMBLE!r} or {TIME_AVERAGE!r}")
        if any(t <= 0 for t in self.thetas):
            raise ValueError("thetas must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class MomentEstimate:
    theta: float
    estimate: float
    se: float
    replicas: int
    low_confidence: bool = False
    checkpoints: list = field(default_factory=list)
    growing: bool = False


@dataclass
class HillEstimate:
    alpha: float
    k: int
    n: int
    k_fraction: float


@dataclass
class SimReport:
    config: SimConfig
    estimates: list
    tail_index: HillEstimate = None
    backend: str = ""

    def to_dict(self):
        d = {
            "config": asdict(self.config),
            "estimates": [asdict(e) for e in self.estimates],
            "tail_index": asdict(self.tail_index) if self.tail_index else None,
        }
        d["config"]["thetas"] = list(self.config.thetas)
        return d


# --------------------------------------------------------------------------
# Path generation
# --------------------------------------------------------------------------

def _layout(spec: ModelSpec) -> int:
    f = spec.coeffs
    return (len(f.dists) if isinstance(f, FiniteIndependent) else 1) + 1


def _uniforms(seed: int, r0: int, n: int, T1: int, k: int) -> np.ndarray:
    U = np.empty((n, T1, k))
    for i in range(n):
        U[i] = RandomStream(seed, r0 + i).uniform(T1 * k).reshape(T1, k)
    return U


def _noise(spec, U):
    col = 0 if spec.noise.dependence == JOINT_ROW else U.shape[-1] - 1
    return np.asarray(spec.noise.dist.quantile(U[..., col]), dtype=float)


def _rows(spec, U):
    f = spec.coeffs
    if isinstance(f, FiniteIndependent):
        return np.stack([np.asarray(d.quantile(U[..., j]), dtype=float) for j, d in enumerate(f.dists)], axis=-1)
    z = np.asarray(f.factor.quantile(U[..., 0]), dtype=float)
    return z[..., None] * np.asarray(f.weights)


def _paths_from_uniforms(spec, U):
    B = _noise(spec, U)
    f = spec.coeffs
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(f, GeometricFactor):
            Z = np.asarray(f.factor.quantile(U[..., 0]), dtype=float)
            X, Xm = kernels.geometric_paths(np.ascontiguousarray(Z), np.ascontiguousarray(B), f.beta,
                                            spec.assumption == A1)
            return X, (None if spec.assumption == A1 else Xm), Z
        R = _rows(spec, U)
        X = kernels.ar_paths(np.ascontiguousarray(R), np.ascontiguousarray(B), spec.assumption == A1)
        return X, None, R


def simulate_path(spec: ModelSpec, T: int, stream: RandomStream, return_rows: bool = False):
    """``X_0..X_T`` started from a zero past.

    Under A1 row ``t`` feeds ``X_t``; under A2 row ``u`` supplies the lag-j
    coefficient of ``X_{u+j}`` for every ``j``, so one draw of a shared factor
    multiplies ``X_u`` at all later lags.  With ``return_rows`` the drawn
    rows (or, for geometric weights, the factor sequence) are returned too.
    """
    k = _layout(spec)
    U = stream.uniform((T + 1) * k).reshape(1, T + 1, k)
    X, _, rows = _paths_from_uniforms(spec, U)
    return (X[0], rows[0]) if return_rows else X[0]


def simulate_geometric(spec: ModelSpec, T: int, stream: RandomStream):
    """Geometric-weight path in O(1) per step and, under A2, its Markov twin.

    With ``A_{t,j} = beta^j Z_{t-j+1}`` the running sum
    ``S_t = beta Z_t X_{t-1} + beta S_{t-1}`` gives ``X_t = B_t + S_t``.  The
    twin ``X'_t = B_t - beta B_{t-1} + beta (1 + Z_t) X'_{t-1}`` (which is
    ``1 + beta (1 + Z_t) X'_{t-1}`` for ``B = 1/(1-beta)``) uses the same
    ``Z`` and ``B`` and ``X'_0 = X_0``.  Returns ``(X, X_markov, Z)``;
    ``X_markov`` is ``None`` under A1.
    """
    if not isinstance(spec.coeffs, GeometricFactor):
        raise ValueError("simulate_geometric needs a geometric_factor model")
    k = _layout(spec)
    U = stream.uniform((T + 1) * k).reshape(1, T + 1, k)
    X, Xm, Z = _paths_from_uniforms(spec, U)
    return X[0], (None if Xm is None else Xm[0]), Z[0]


# --------------------------------------------------------------------------
# Estimation
# --------------------------------------------------------------------------

def _powers(x, theta):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.power(x, theta)


def estimate_moment(samples, theta: float) -> MomentEstimate:
    """Ensemble mean of ``X^theta`` with its jackknife standard error.

    For the mean the jackknife error equals ``s / sqrt(n)``.  Fewer than
    10 samples yield an estimate flagged low-confidence and no error.
    """
    x = _powers(np.asarray(samples, dtype=float), theta)
    n = x.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        est = float(np.mean(x))
        if n < MIN_SE_REPLICAS:
            return MomentEstimate(theta, est, math.nan, n, True)
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if math.isfinite(est) else math.inf
    return MomentEstimate(theta, est, se, n)


def estimate_time_average(paths, theta: float, burn_in: int, batches: int = 20) -> MomentEstimate:
    """Average of ``X_t^theta`` over ``t > burn_in`` with a batch-means error."""
    x = _powers(np.asarray(paths, dtype=float)[:, burn_in + 1 :], theta)
    R, L = x.shape
    nb = min(batches, L)
    with np.errstate(over="ignore", invalid="ignore"):
        per = np.array_split(x, nb, axis=1)
        bm = np.concatenate([blk.mean(axis=1) for blk in per])
        est = float(np.mean(x))
        m = bm.shape[0]
        if m < MIN_SE_REPLICAS:
            return MomentEstimate(theta, est, math.nan, R, True)
        se = float(np.std(bm, ddof=1) / math.sqrt(m)) if math.isfinite(est) else math.inf
    return MomentEstimate(theta, est, se, R)


def checkpoints_for(T: int):
    return sorted({max(1, T // 8), max(1, T // 4), max(1, T // 2), T})


def _growth_flag(points):
    """True when the estimate keeps rising across the checkpoints.

    Requires a strict rise at every checkpoint and, overall, either a jump of
    more than an order of magnitude (or to ``inf``) or a rise of more than two
    standard errors at every step.  Heavy tails inflate the standard error as
    fast as the estimate, so the relative rule is the one that fires there.
    """
    if len(points) < 3:
        return False
    est = [p[1] for p in points]
    if any(math.isnan(v) for v in est) or est[0] <= 0:
        return False
    if not all(b > a or b == math.inf for a, b in zip(est, est[1:])):
        return False
    if est[-1] == math.inf or est[-1] > 10 * est[0]:
        return True
    for (_, a, sa), (_, b, sb) in zip(points, points[1:]):
        s = math.hypot(sa, sb) if math.isfinite(sa) and math.isfinite(sb) else 0.0
        if not b - a > 2 * s:
            return False
    return True


def hill_tail_index(samples, k_fraction: float = 0.05) -> HillEstimate:
    """Hill estimator from the top ``ceil(k_fraction * n)`` order statistics."""
    if not 0 < k_fraction <= 0.2:
        raise ValueError("k_fraction must lie in (0, 0.2]")
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x) & (x > 0)]
    n = x.shape[0]
    if n < 1000:
        raise ValueError(f"need at least 1000 positive samples, got {n}")
    k = math.ceil(k_fraction * n)
    if k < 50 or k >= n:
        raise ValueError(f"need at least 50 exceedances, got {k}")
    xs = np.sort(x)[::-1]
    h = float(np.mean(np.log(xs[:k] / xs[k])))
    if h <= 0:
        raise ValueError("no tail: top order statistics are all equal")
    return HillEstimate(1.0 / h, k, n, k_fraction)


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------

def _chunk_size(T1, k, R):
    return max(1, min(R, CHUNK_BUDGET // (T1 * (k + 1))))


def simulate(spec: ModelSpec, config: SimConfig) -> SimReport:
    """Run ``config.replicas`` independent paths and estimate ``E[X^theta]``."""
    T1 = config.horizon + 1
    k = _layout(spec)
    R = config.replicas
    cps = checkpoints_for(config.horizon)
    cs = _chunk_size(T1, k, R)
    starts = list(range(0, R, cs))
    avg = config.mode == TIME_AVERAGE

    def work(r0):
        n = min(cs, R - r0)
        X, _, _ = _paths_from_uniforms(spec, _uniforms(config.seed, r0, n, T1, k))
        return X if avg else X[:, cps]

    if config.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    data = np.concatenate(parts, axis=0)

    estimates = []
    for th in config.thetas:
        if avg:
            e = estimate_time_average(data, th, config.burn_in)
        else:
            e = estimate_moment(data[:, -1], th)
            pts = []
            for i, t in enumerate(cps):
                ei = estimate_moment(data[:, i], th)
                pts.append((t, ei.estimate, ei.se))
            e.checkpoints = [list(p) for p in pts]
            e.growing = _growth_flag(pts)
        estimates.append(e)
    tail = None
    if config.tail_fraction is not None:
        tail = hill_tail_index(data[:, -1] if not avg else data[:, config.burn_in + 1 :].ravel(),
                               config.tail_fraction)
    return SimReport(config, estimates, tail, backend())
