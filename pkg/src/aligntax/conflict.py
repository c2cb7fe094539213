"""Safety-safety tradeoffs when capabilities are held fixed.

Preserving a capability ``c`` restricts perturbations to ``c^perp``. Two
safety directions then trade off through their projections onto ``c^perp``,
whose cosine is the partial correlation

    cos(theta) = (rho - a*b) / sqrt((1 - a**2) * (1 - b**2)),

with ``rho = <v1, v2>``, ``a = <c, v1>``, ``b = <c, v2>``. The normalized
gains then obey the same frontier equation as the safety-capability case.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, DimensionMismatch, InfeasibleBudget, InfeasibleTarget
from .geometry import CapabilitySet, Direction, as_vector, clamp_unit, normalize_direction

DEGENERATE_TOL = 1e-12
SYMMETRIC_TOL = 1e-12
_DEGENERATE_SIN = 1e-8


@dataclass(frozen=True, eq=False)
class SafetyPair:
    v1: Direction
    v2: Direction
    rho: float

    @classmethod
    def from_vectors(cls, v1, v2) -> "SafetyPair":
        d1 = v1 if isinstance(v1, Direction) else normalize_direction(v1)
        d2 = v2 if isinstance(v2, Direction) else normalize_direction(v2)
        if d1.d != d2.d:
            raise DimensionMismatch(f"safety directions have dimensions {d1.d} and {d2.d}")
        return cls(d1, d2, clamp_unit(d1.coords @ d2.coords))


@dataclass(frozen=True, eq=False)
class EffectiveAngleResult:
    cos_theta: float
    theta: float
    a: float | np.ndarray
    b: float | np.ndarray
    tilde_norms: tuple[float, float]
    correction: float


def effective_angle(rho: float, a: float, b: float) -> EffectiveAngleResult:
    """Partial correlation of two safety directions given one capability direction.

    The inputs are taken at face value; use :func:`classify_vectors` or
    :func:`effective_angle_multi` to start from actual vectors.
    """
    if abs(rho) > 1 + 1e-12:
        raise ValueError(f"|rho| must be at most 1, got {rho}")
    na, nb = 1.0 - a * a, 1.0 - b * b
    if na <= DEGENERATE_TOL or nb <= DEGENERATE_TOL:
        raise DegenerateProjection("a safety direction lies along the capability direction")
    tn = (math.sqrt(na), math.sqrt(nb))
    cos_t = clamp_unit((rho - a * b) / (tn[0] * tn[1]))
    return EffectiveAngleResult(cos_t, math.acos(cos_t), a, b, tn, a * b)


def effective_angle_multi(pair: SafetyPair, capset: CapabilitySet) -> EffectiveAngleResult:
    """Partial correlation given a whole capability subspace.

    The correction ``a^T (C^T C)^{-1} b`` is evaluated as the inner product
    of the coordinates of ``P_C v1`` and ``P_C v2`` in the orthonormal basis
    of the (numerically ranked) subspace.
    """
    if pair.v1.d != capset.d:
        raise DimensionMismatch(f"safety dimension {pair.v1.d} differs from capability dimension {capset.d}")
    q1 = capset.coefficients(pair.v1)
    q2 = capset.coefficients(pair.v2)
    tau1, tau2 = float(q1 @ q1), float(q2 @ q2)
    if tau1 >= 1 - DEGENERATE_TOL or tau2 >= 1 - DEGENERATE_TOL:
        raise DegenerateProjection("a safety direction lies inside the capability subspace")
    correction = float(q1 @ q2)
    tn = (math.sqrt(1 - tau1), math.sqrt(1 - tau2))
    cos_t = clamp_unit((pair.rho - correction) / (tn[0] * tn[1]))
    return EffectiveAngleResult(
        cos_theta=cos_t,
        theta=math.acos(cos_t),
        a=capset.inner_products(pair.v1),
        b=capset.inner_products(pair.v2),
        tilde_norms=tn,
        correction=correction,
    )


def safety_safety_frontier(theta: float, s2: float) -> float:
    """Largest normalized gain ``s1`` compatible with normalized gain ``s2``."""
    if abs(s2) > 1 + 1e-12:
        raise InfeasibleTarget(f"normalized gain must satisfy |s2| <= 1, got {s2}")
    st, ct = math.sin(theta), math.cos(theta)
    if st < _DEGENERATE_SIN:
        return s2 * math.copysign(1.0, ct)
    return s2 * ct + st * math.sqrt(max(0.0, 1.0 - s2 * s2))


def equal_improvement(theta: float) -> float:
    """Largest common normalized gain ``s1 = s2``: ``cos(theta / 2)``."""
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    return math.cos(theta / 2)


def denormalize_gain(s: float, residual_budget: float, tau: float) -> float:
    """Raw safety gain ``s * B' * sqrt(1 - tau)`` for a normalized gain ``s``."""
    return s * residual_budget * math.sqrt(max(0.0, 1.0 - tau))


class ConflictLabel(str, enum.Enum):
    OPPOSITE_SIGN = "OppositeSign"
    SYMMETRIC_SAME_SIGN = "SymmetricSameSign"
    ASYMMETRIC_SAME_SIGN = "AsymmetricSameSign"
    ZERO_PROJECTION = "ZeroProjection"


@dataclass(frozen=True)
class ConflictClass:
    label: ConflictLabel
    effective_corr: float
    raw_corr: float
    improves_tradeoff: bool

    def as_dict(self) -> dict:
        return {
            "label": self.label.value,
            "effective_corr": self.effective_corr,
            "raw_corr": self.raw_corr,
            "improves_tradeoff": self.improves_tradeoff,
        }


def classify_capability(rho: float, a: float, b: float) -> ConflictClass:
    """Sort a capability by the sign pattern of its projections onto two safety directions.

    ``improves_tradeoff`` reports whether holding the capability fixed raises
    the effective correlation above ``rho``; it is computed, never inferred
    from the label.
    """
    eff = effective_angle(rho, a, b).cos_theta
    ab = a * b
    if ab < 0:
        label = ConflictLabel.OPPOSITE_SIGN
    elif ab > 0:
        if abs(a - b) <= SYMMETRIC_TOL:
            label = ConflictLabel.SYMMETRIC_SAME_SIGN
        else:
            label = ConflictLabel.ASYMMETRIC_SAME_SIGN
    else:
        label = ConflictLabel.ZERO_PROJECTION
    return ConflictClass(label, eff, rho, eff > rho)


def classify_vectors(v1, v2, c) -> ConflictClass:
    """:func:`classify_capability` for an actual (hence realizable) vector triple."""
    v1, v2, c = (as_vector(x) for x in (v1, v2, c))
    pair = SafetyPair.from_vectors(v1, v2)
    c = normalize_direction(c).coords
    return classify_capability(pair.rho, float(c @ pair.v1.coords), float(c @ pair.v2.coords))


def _residual_and_rooms(budget_radius, delta_c_star_norm, tau1, tau2):
    if delta_c_star_norm > budget_radius * (1 + 1e-12):
        raise InfeasibleBudget(f"||delta_c|| = {delta_c_star_norm:g} exceeds the budget {budget_radius:g}")
    for t in (tau1, tau2):
        if not -1e-12 <= t <= 1 + 1e-12:
            raise ValueError(f"tax rates must lie in [0, 1], got {t}")
    residual = math.sqrt(max(0.0, budget_radius**2 - delta_c_star_norm**2))
    return residual, (math.sqrt(max(0.0, 1 - tau1)), math.sqrt(max(0.0, 1 - tau2)))


def decomposition_bound(
    budget_radius: float, delta_c_star_norm: float, theta: float, tau1: float, tau2: float
) -> float:
    """``B' cos(theta/2) min(sqrt(1-tau1), sqrt(1-tau2))``.

    This is ``min(dS1, dS2)`` at the point of equal normalized gains, so it is
    always attainable. It bounds the best ``min(dS1, dS2)`` from above only
    when ``tau1 == tau2``; otherwise shifting normalized gain towards the
    objective with the smaller residual norm does better. See
    :func:`equal_gain_ceiling` for a bound that holds in general.
    """
    residual, rooms = _residual_and_rooms(budget_radius, delta_c_star_norm, tau1, tau2)
    return residual * equal_improvement(theta) * min(rooms)


def equal_gain_ceiling(
    budget_radius: float, delta_c_star_norm: float, theta: float, tau1: float, tau2: float
) -> float:
    """``B' cos(theta/2) max(sqrt(1-tau1), sqrt(1-tau2))``, an upper bound on ``max min(dS1, dS2)``."""
    residual, rooms = _residual_and_rooms(budget_radius, delta_c_star_norm, tau1, tau2)
    return residual * equal_improvement(theta) * max(rooms)
