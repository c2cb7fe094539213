"""Random feature packings and how the tax behaves as dimension grows.

A packing places one safety feature ``v`` and ``m = |I| + m'`` capability
features on the unit sphere of ``R^d``. The ``|I|`` intrinsic capabilities
have prescribed overlaps ``gamma_i`` with ``v``; the ``m'`` incidental ones
are drawn uniformly and overlap ``v`` only through packing noise, which
contributes about ``m'/d`` to the tax.

Random streams
--------------
Every trial draws from its own ``numpy.random.PCG64`` generator, seeded by
``SeedSequence(seed, spawn_key=key)`` where ``key`` identifies the trial
(for Monte Carlo runs ``(d, trial_index)``). Streams therefore do not depend
on execution order or on how many threads run them.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .conflict import SafetyPair, effective_angle_multi
from .errors import (
    EmptyPairSet,
    InsufficientSeries,
    NearOrthogonalityViolated,
    NotSuperposed,
    SpecInfeasible,
)
from .geometry import CapabilitySet, Direction, as_vector, build_capability_set, clamp_unit, tax_rate

SEED_MAX = 2**64 - 1

# Regime thresholds (configuration, not theory).
FIXED_R2 = 0.95
LINEAR_SPREAD = 0.10
FLAT_EXCESS = 1e-12


def _check_seed(seed: int) -> int:
    if int(seed) != seed or not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``(seed, key)``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def sample_uniform_direction(d: int, rng: np.random.Generator) -> Direction:
    """Uniform point on the unit sphere of ``R^d`` (normalized Gaussian)."""
    if d < 1:
        raise ValueError(f"dimension must be at least 1, got {d}")
    while True:
        g = rng.standard_normal(d)
        n = float(np.linalg.norm(g))
        if n > 0:
            return Direction(g / n)


def _uniform_rows(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    # same draws as n successive sample_uniform_direction calls
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def _haar_frame(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    # first k columns of a Haar orthogonal matrix
    q, r = np.linalg.qr(rng.standard_normal((d, k)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _check_overlaps(gammas: Sequence[float], what: str = "intrinsic overlaps") -> float:
    for g in gammas:
        if not -1.0 < g < 1.0:
            raise SpecInfeasible(f"{what} must lie in (-1, 1), got {g}")
    tau0 = float(sum(g * g for g in gammas))
    if tau0 >= 1.0:
        raise SpecInfeasible(f"sum of squared {what} is {tau0:g}; it must be below 1")
    return tau0


@dataclass(frozen=True)
class PackingSpec:
    """Dimension, prescribed safety-capability overlaps and incidental capability count.

    The construction needs ``|I| + 1 <= d`` (the intrinsic capabilities plus
    one direction carrying the rest of ``v``). ``superposed`` flags specs
    with more capabilities than dimensions.
    """

    d: int
    intrinsic_overlaps: tuple[float, ...] = ()
    m_prime: int = 0
    n_total_features: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "intrinsic_overlaps", tuple(float(g) for g in self.intrinsic_overlaps))
        if self.d < 1:
            raise SpecInfeasible(f"dimension must be at least 1, got {self.d}")
        if self.m_prime < 0:
            raise SpecInfeasible(f"m_prime must be non-negative, got {self.m_prime}")
        _check_overlaps(self.intrinsic_overlaps)
        if len(self.intrinsic_overlaps) + 1 > self.d:
            raise SpecInfeasible(
                f"{len(self.intrinsic_overlaps)} intrinsic overlaps need dimension at least "
                f"{len(self.intrinsic_overlaps) + 1}, got {self.d}"
            )

    @property
    def i_count(self) -> int:
        return len(self.intrinsic_overlaps)

    @property
    def m(self) -> int:
        return self.i_count + self.m_prime

    @property
    def superposed(self) -> bool:
        return self.m > self.d

    @property
    def gamma_bar(self) -> float:
        return max((abs(g) for g in self.intrinsic_overlaps), default=0.0)

    def at_dimension(self, d: int) -> "PackingSpec":
        return replace(self, d=int(d))


@dataclass(frozen=True, eq=False)
class PackingEnsemble:
    """One realized packing.

    ``capabilities`` lists intrinsic capabilities first; it is None when the
    spec has no capabilities at all.
    """

    spec: PackingSpec
    safety: Direction
    capabilities: CapabilitySet | None
    realized_overlaps: np.ndarray
    seed: int
    stream: tuple[int, ...] = ()

    @property
    def residuals(self) -> np.ndarray:
        """Realized overlap minus intrinsic overlap, ``epsilon_i``."""
        gam = np.zeros(self.spec.m)
        gam[: self.spec.i_count] = self.spec.intrinsic_overlaps
        return self.realized_overlaps - gam

    def tax(self) -> float:
        if self.capabilities is None:
            return 0.0
        return tax_rate(self.safety, self.capabilities).joint_tax

    def features(self) -> np.ndarray:
        """Rows ``[v, c_1, ..., c_m]``."""
        rows = [self.safety.coords]
        if self.capabilities is not None:
            rows.extend(c.coords for c in self.capabilities.directions)
        return np.vstack(rows)

    def unrelated_pairs(self) -> list[tuple[int, int]]:
        """Index pairs into :meth:`features` whose intrinsic overlap is zero."""
        n = 1 + self.spec.m
        return [(i, j) for i in range(n) for j in range(i + 1, n) if not (i == 0 and j <= self.spec.i_count)]

    def coherence(self) -> float:
        return coherence(self.features(), self.unrelated_pairs())


def build_packing(spec: PackingSpec, seed: int, stream: Iterable[int] = ()) -> PackingEnsemble:
    """Realize a packing with exact intrinsic overlaps.

    Intrinsic capabilities form a Haar-random orthonormal frame
    ``e_1..e_k`` and ``v = sum_i gamma_i e_i + sqrt(1 - tau0) w`` with ``w``
    the next frame vector. This makes ``<v, e_i> = gamma_i`` exactly, keeps
    capability-capability overlaps among intrinsic features at zero and
    leaves ``v`` uniform on the sphere. Incidental capabilities are drawn
    uniformly and independently.
    """
    stream = tuple(int(s) for s in stream)
    rng = trial_rng(seed, *stream)
    gam = np.array(spec.intrinsic_overlaps)
    k = gam.size
    frame = _haar_frame(spec.d, k + 1, rng)
    tau0 = float(gam @ gam)
    v = frame[:, :k] @ gam + math.sqrt(1.0 - tau0) * frame[:, k]
    safety = Direction(v / np.linalg.norm(v))
    caps = [frame[:, i] for i in range(k)]
    caps.extend(_uniform_rows(spec.m_prime, spec.d, rng))
    capset = build_capability_set(caps) if caps else None
    overlaps = np.array([float(safety.coords @ c) for c in caps])
    overlaps.setflags(write=False)
    return PackingEnsemble(spec, safety, capset, overlaps, int(seed), stream)


def coherence(vectors, pairs: Iterable[tuple[int, int]] | None = None) -> float:
    """Largest ``|<f_i, f_j>|`` over the declared intrinsically unrelated pairs.

    ``pairs=None`` treats every pair as unrelated.
    """
    x = np.vstack([as_vector(f) for f in vectors])
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"coherence needs at least 2 vectors, got {n}")
    g = np.abs(x @ x.T)
    if pairs is None:
        iu = np.triu_indices(n, k=1)
        return float(g[iu].max())
    idx = [(int(i), int(j)) for i, j in pairs]
    if not idx:
        raise EmptyPairSet("no intrinsically unrelated pairs declared")
    for i, j in idx:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"invalid pair ({i}, {j}) for {n} vectors")
    rows, cols = zip(*idx)
    return float(g[list(rows), list(cols)].max())


def welch_bound(n_features: int, d: int) -> float:
    """Smallest possible coherence ``sqrt((N - d) / (d (N - 1)))`` of ``N`` unit vectors in ``R^d``."""
    if d < 1:
        raise ValueError(f"dimension must be at least 1, got {d}")
    if n_features == d:
        return 0.0
    if n_features < d:
        raise NotSuperposed(f"{n_features} features fit orthogonally in dimension {d}")
    return math.sqrt((n_features - d) / (d * (n_features - 1)))


def irreducible_tax(spec: PackingSpec) -> float:
    """``tau0``: the part of the tax carried by intrinsic overlaps."""
    return float(sum(g * g for g in spec.intrinsic_overlaps))


def residual_bound(tau0: float, m: int, m_prime: int, mu: float, gamma_bar: float, i_count: int) -> float:
    """Bound on ``|tau - tau0|`` for a packing with coherence ``mu``.

    Only valid under near-orthogonality ``m * mu < 1``.
    """
    if mu < 0:
        raise ValueError(f"coherence must be non-negative, got {mu}")
    if m * mu >= 1:
        raise NearOrthogonalityViolated(f"m * mu = {m * mu:g} >= 1; use Monte Carlo instead")
    num = tau0 * m * mu + m_prime * mu**2 + 2 * gamma_bar * i_count * mu + i_count * mu**2
    return num / (1 - m * mu)


class Estimate(NamedTuple):
    mean: float
    std_error: float


def _mean_and_se(x: np.ndarray) -> Estimate:
    if x.size < 2:
        return Estimate(float(x.mean()), 0.0)
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)))


def _run_trials(fn: Callable[[int], float], trials: int, workers: int) -> np.ndarray:
    """Evaluate ``fn(t)`` for every trial index; results land in trial order."""
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    out = np.empty(trials)

    def chunk(lo: int, hi: int) -> None:
        for t in range(lo, hi):
            out[t] = fn(t)

    if workers == 1:
        chunk(0, trials)
    else:
        bounds = np.linspace(0, trials, min(workers, trials) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for f in [ex.submit(chunk, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]:
                f.result()
    return out


def monte_carlo_tax(spec: PackingSpec, trials: int, seed: int, workers: int = 1) -> Estimate:
    """Mean and standard error of the tax over independently seeded packings.

    Trial ``t`` uses stream ``(spec.d, t)``; the estimate is independent of
    ``workers``.
    """
    _check_seed(seed)
    taxes = _run_trials(lambda t: build_packing(spec, seed, (spec.d, t)).tax(), trials, workers)
    return _mean_and_se(taxes)


class Regime(str, enum.Enum):
    FIXED = "Fixed"
    SUBLINEAR = "Sublinear"
    LINEAR = "Linear"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class RegimeVerdict:
    regime: Regime
    slope: float
    r_squared: float
    relative_spread: float
    loglog_exponent: float | None
    residual_rms: float

    def as_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "relative_spread": self.relative_spread,
            "loglog_exponent": self.loglog_exponent,
            "residual_rms": self.residual_rms,
        }


def regime_classify(series: Sequence[tuple[float, float]], tau0_estimate: float) -> RegimeVerdict:
    """Decide how the excess tax ``tau(d) - tau0`` scales with ``d``.

    The excess is fitted as ``slope / d`` by least squares through ``tau0``.
    Checks run in order: a flat-zero excess is Fixed; a spread below 10% of
    the mean excess is Linear (plateau); an ``R^2 >= 0.95`` for the ``1/d``
    fit is Fixed; a decreasing excess with log-log exponent in ``(0, 1)`` is
    Sublinear; anything else is Undetermined.
    """
    pts = sorted((float(d), float(t)) for d, t in series)
    ds = np.array([p[0] for p in pts])
    if np.unique(ds).size < 3:
        raise InsufficientSeries(f"need at least 3 distinct dimensions, got {np.unique(ds).size}")
    excess = np.array([p[1] for p in pts]) - tau0_estimate
    x = 1.0 / ds
    slope = float(excess @ x / (x @ x))
    resid = excess - slope * x
    ss_tot = float(np.sum((excess - excess.mean()) ** 2))
    ss_res = float(resid @ resid)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    mean_ex = float(excess.mean())
    spread = float((excess.max() - excess.min()) / abs(mean_ex)) if mean_ex != 0 else math.inf
    exponent = None
    if np.all(excess > 0):
        exponent = float(-np.polyfit(np.log(ds), np.log(excess), 1)[0])
    rms = math.sqrt(ss_res / ds.size)

    if np.max(np.abs(excess)) <= FLAT_EXCESS:
        regime, slope = Regime.FIXED, 0.0
    elif spread < LINEAR_SPREAD:
        regime = Regime.LINEAR
    elif r2 >= FIXED_R2 and slope > 0:
        regime = Regime.FIXED
    elif exponent is not None and excess[-1] < excess[0] and 0 < exponent < 1:
        regime = Regime.SUBLINEAR
    else:
        regime = Regime.UNDETERMINED
    return RegimeVerdict(regime, slope, r2, spread, exponent, rms)


@dataclass(frozen=True)
class SeriesPoint:
    d: int
    mean_tax: float
    std_error: float
    trials: int


@dataclass(frozen=True)
class InverseDFit:
    """Ordinary least squares ``tau(d) = intercept + slope / d`` with propagated standard errors."""

    intercept: float
    slope: float
    intercept_se: float
    slope_se: float


def fit_inverse_d(points: Sequence[SeriesPoint]) -> InverseDFit:
    x = np.array([1.0 / p.d for p in points])
    y = np.array([p.mean_tax for p in points])
    se = np.array([p.std_error for p in points])
    a = np.column_stack([np.ones_like(x), x])
    # rows of pinv are the linear weights mapping y to (intercept, slope)
    w = np.linalg.pinv(a)
    coef = w @ y
    err = np.sqrt((w**2) @ (se**2))
    return InverseDFit(float(coef[0]), float(coef[1]), float(err[0]), float(err[1]))


@dataclass(frozen=True)
class ScalingSeries:
    points: tuple[SeriesPoint, ...]
    tau0: float
    fitted_slope: float
    regime: Regime
    verdict: RegimeVerdict
    fit: InverseDFit | None = field(default=None)

    def as_dict(self) -> dict:
        out = {
            "points": [
                {"d": p.d, "mean_tax": p.mean_tax, "std_error": p.std_error, "trials": p.trials} for p in self.points
            ],
            "tau0": self.tau0,
            "fitted_slope": self.fitted_slope,
            "regime": self.regime.value,
            "diagnostics": self.verdict.as_dict(),
        }
        if self.fit is not None:
            out["ols_fit"] = {
                "intercept": self.fit.intercept,
                "slope": self.fit.slope,
                "intercept_se": self.fit.intercept_se,
                "slope_se": self.fit.slope_se,
            }
        return out

    def csv_rows(self) -> tuple[list[str], list[list[float]]]:
        return ["d", "mean_tax", "std_error"], [[p.d, p.mean_tax, p.std_error] for p in self.points]


def scaling_series(
    spec: PackingSpec, d_values: Sequence[int], trials: int, seed: int, workers: int = 1
) -> ScalingSeries:
    """Monte Carlo tax at each dimension in ``d_values`` plus a regime verdict.

    ``spec.d`` is ignored; the spec is re-instantiated at every ``d``.
    """
    ds = sorted({int(d) for d in d_values})
    pts = []
    for d in ds:
        est = monte_carlo_tax(spec.at_dimension(d), trials, seed, workers)
        pts.append(SeriesPoint(d, est.mean, est.std_error, int(trials)))
    tau0 = irreducible_tax(spec)
    verdict = regime_classify([(p.d, p.mean_tax) for p in pts], tau0)
    fit = fit_inverse_d(pts) if len(pts) >= 2 else None
    return ScalingSeries(tuple(pts), tau0, verdict.slope, verdict.regime, verdict, fit)


@dataclass(frozen=True)
class AnglePackingSpec:
    """Two safety directions sharing ``k`` intrinsic capabilities.

    ``gamma1[i]`` and ``gamma2[i]`` are the overlaps of each safety direction
    with intrinsic capability ``i``; ``rho0`` is their raw correlation.
    """

    rho0: float
    gamma1: tuple[float, ...] = ()
    gamma2: tuple[float, ...] = ()
    m_prime: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gamma1", tuple(float(g) for g in self.gamma1))
        object.__setattr__(self, "gamma2", tuple(float(g) for g in self.gamma2))
        if len(self.gamma1) != len(self.gamma2):
            raise SpecInfeasible("both safety directions need one overlap per intrinsic capability")
        if not -1.0 <= self.rho0 <= 1.0:
            raise SpecInfeasible(f"rho0 must lie in [-1, 1], got {self.rho0}")
        if self.m_prime < 0:
            raise SpecInfeasible(f"m_prime must be non-negative, got {self.m_prime}")
        t1 = _check_overlaps(self.gamma1, "overlaps of the first safety direction")
        t2 = _check_overlaps(self.gamma2, "overlaps of the second safety direction")
        cos0 = (self.rho0 - float(np.dot(self.gamma1, self.gamma2))) / math.sqrt((1 - t1) * (1 - t2))
        if abs(cos0) > 1 + 1e-12:
            raise SpecInfeasible(f"overlaps and rho0 are inconsistent: implied cos(theta0) = {cos0:g}")

    @property
    def k(self) -> int:
        return len(self.gamma1)

    @property
    def cos_theta0(self) -> float:
        t1 = sum(g * g for g in self.gamma1)
        t2 = sum(g * g for g in self.gamma2)
        return clamp_unit((self.rho0 - float(np.dot(self.gamma1, self.gamma2))) / math.sqrt((1 - t1) * (1 - t2)))

    @property
    def theta0(self) -> float:
        """Limiting effective angle once incidental overlaps vanish."""
        return math.acos(self.cos_theta0)


def build_angle_packing(
    spec: AnglePackingSpec, d: int, seed: int, stream: Iterable[int] = ()
) -> tuple[SafetyPair, CapabilitySet | None]:
    """Realize two safety directions with exact overlaps and correlation ``rho0``."""
    k = spec.k
    if d < k + 2:
        raise SpecInfeasible(f"{k} shared capabilities need dimension at least {k + 2}, got {d}")
    rng = trial_rng(seed, *stream)
    frame = _haar_frame(d, k + 2, rng)
    e, w1, w2 = frame[:, :k], frame[:, k], frame[:, k + 1]
    g1, g2 = np.array(spec.gamma1), np.array(spec.gamma2)
    r1, r2 = math.sqrt(max(0.0, 1 - g1 @ g1)), math.sqrt(max(0.0, 1 - g2 @ g2))
    c0 = spec.cos_theta0
    s0 = math.sqrt(max(0.0, 1 - c0 * c0))
    v1 = e @ g1 + r1 * w1
    v2 = e @ g2 + r2 * (c0 * w1 + s0 * w2)
    caps = [e[:, i] for i in range(k)]
    caps.extend(_uniform_rows(spec.m_prime, d, rng))
    pair = SafetyPair.from_vectors(v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2))
    return pair, (build_capability_set(caps) if caps else None)


@dataclass(frozen=True)
class AnglePoint:
    d: int
    mean_theta: float
    std_error: float
    trials: int


def angle_convergence(
    spec: AnglePackingSpec, d_values: Sequence[int], trials: int, seed: int, workers: int = 1
) -> tuple[list[AnglePoint], float]:
    """Monte Carlo effective angle at each dimension, together with ``theta0``."""
    _check_seed(seed)

    def one(d: int, t: int) -> float:
        pair, caps = build_angle_packing(spec, d, seed, (d, t))
        if caps is None:
            return math.acos(pair.rho)
        return effective_angle_multi(pair, caps).theta

    out = []
    for d in sorted({int(d) for d in d_values}):
        est = _mean_and_se(_run_trials(lambda t, d=d: one(d, t), trials, workers))
        out.append(AnglePoint(d, est.mean, est.std_error, int(trials)))
    return out, spec.theta0


class ProjectionEstimate(NamedTuple):
    analytic: float
    mean: float
    std_error: float


def expected_random_projection(r: int, d: int, trials: int, seed: int) -> ProjectionEstimate:
    """Analytic ``r/d`` and Monte Carlo ``<c, P_U c>`` for random rank-``r`` ``U`` and uniform ``c``."""
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    _check_seed(seed)

    def one(t: int) -> float:
        rng = trial_rng(seed, r, d, t)
        u = _haar_frame(d, r, rng)
        c = sample_uniform_direction(d, rng).coords
        q = u.T @ c
        return float(q @ q)

    est = _mean_and_se(_run_trials(one, trials, 1))
    return ProjectionEstimate(r / d, est.mean, est.std_error)
