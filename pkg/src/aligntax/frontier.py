"""Safety-capability Pareto frontiers under a perturbation budget.

A perturbation ``delta`` with ``||delta|| <= B`` changes safety by
``<v, delta>`` and capability by ``<c, delta>``. For a single capability at
angle ``alpha`` to the safety direction, the largest safety gain compatible
with a capability change ``dc`` is

    dc * cos(alpha) + sin(alpha) * sqrt(B**2 - dc**2)

and for a whole capability subspace pinned to ``P_C delta = delta_c`` it is
``<v, delta_c> + sqrt(B**2 - ||delta_c||**2) * ||P_{C^perp} v||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ConstraintNotInSubspace,
    DimensionMismatch,
    InfeasibleBudget,
    InfeasibleTarget,
    InvalidSampleCount,
    NotSPD,
)
from .geometry import (
    CapabilitySet,
    Direction,
    as_vector,
    clamp_unit,
    normalize_direction,
    orthogonal_residual,
    project,
)

DEGENERATE_SIN = 1e-8
TAU_ONE_ROOM = 1e-10
SUBSPACE_TOL = 1e-8
SPD_TOL = 1e-12
SYMMETRY_TOL = 1e-10
_FEASIBLE_SLACK = 1e-12


def _sqrt0(x: float) -> float:
    return math.sqrt(x) if x > 0 else 0.0


def _check_target(delta_c: float, budget_radius: float) -> None:
    if not budget_radius > 0:
        raise ValueError(f"budget radius must be positive, got {budget_radius}")
    if abs(delta_c) > budget_radius * (1 + _FEASIBLE_SLACK):
        raise InfeasibleTarget(f"|delta_c| = {abs(delta_c):g} exceeds the budget {budget_radius:g}")


@dataclass(frozen=True)
class FrontierPoint:
    delta_c: float
    delta_s: float


@dataclass(frozen=True)
class FrontierCurve:
    alpha: float
    budget_radius: float
    points: tuple[FrontierPoint, ...]

    def as_array(self) -> np.ndarray:
        """``(n, 2)`` array of ``(delta_c, delta_s)`` rows."""
        return np.array([(p.delta_c, p.delta_s) for p in self.points])


@dataclass(frozen=True, eq=False)
class Perturbation:
    delta: np.ndarray
    norm: float

    @classmethod
    def of(cls, delta) -> "Perturbation":
        delta = np.array(delta, dtype=float)
        delta.setflags(write=False)
        return cls(delta, float(np.linalg.norm(delta)))


@dataclass(frozen=True)
class ConstrainedMaxResult:
    delta_s_max: float
    optimizer: Perturbation
    residual_budget: float
    subsidy: float
    orthogonal_room: float


def frontier_safety(alpha: float, budget_radius: float, delta_c: float) -> float:
    """Maximum safety gain at capability change ``delta_c`` for angle ``alpha``.

    When ``sin(alpha) < 1e-8`` the two directions are collinear and the
    frontier degenerates to ``delta_c * sign(cos(alpha))``.
    """
    if not 0.0 <= alpha <= math.pi:
        raise ValueError(f"alpha must lie in [0, pi], got {alpha}")
    _check_target(delta_c, budget_radius)
    s, c = math.sin(alpha), math.cos(alpha)
    if s < DEGENERATE_SIN:
        return delta_c * math.copysign(1.0, c)
    return delta_c * c + s * _sqrt0(budget_radius**2 - delta_c**2)


def frontier_curve(alpha: float, budget_radius: float, n_samples: int) -> FrontierCurve:
    """Sample the frontier at ``n_samples`` capability changes evenly spaced over ``[-B, B]``."""
    if int(n_samples) != n_samples or n_samples < 2:
        raise InvalidSampleCount(f"need at least 2 samples, got {n_samples}")
    grid = np.linspace(-budget_radius, budget_radius, int(n_samples))
    grid[0], grid[-1] = -budget_radius, budget_radius
    pts = tuple(FrontierPoint(float(x), frontier_safety(alpha, budget_radius, float(x))) for x in grid)
    return FrontierCurve(alpha, budget_radius, pts)


def optimal_delta_single(v, c, budget_radius: float, delta_c: float) -> Perturbation:
    """A perturbation that attains the single-capability frontier.

    The result lies in ``span(v, c)`` and saturates the budget. For
    (numerically) collinear ``v`` and ``c`` the minimum-norm achiever
    ``delta_c * c`` is returned instead; any orthogonal filler would be
    safety-neutral.
    """
    v, c = as_vector(v), as_vector(c)
    if v.shape != c.shape:
        raise DimensionMismatch(f"shapes {v.shape} and {c.shape} differ")
    _check_target(delta_c, budget_radius)
    cos_a = clamp_unit(v @ c)
    w = c - cos_a * v
    sin_a = float(np.linalg.norm(w))
    if sin_a < DEGENERATE_SIN:
        return Perturbation.of(delta_c * c)
    e2 = w / sin_a
    room = _sqrt0(budget_radius**2 - delta_c**2)
    along_v = delta_c * cos_a + sin_a * room
    along_e2 = delta_c * sin_a - cos_a * room
    return Perturbation.of(along_v * v + along_e2 * e2)


def max_safety_constrained(v, capset: CapabilitySet, delta_c_star, budget_radius: float) -> ConstrainedMaxResult:
    """Largest safety gain when the capability component of the perturbation is fixed.

    Parameters
    ----------
    v : Direction or array
        Safety direction.
    capset : CapabilitySet
        Capability subspace ``C``.
    delta_c_star : array
        Required value of ``P_C delta``; must lie in ``C``.
    budget_radius : float
        Budget ``B``.

    Returns
    -------
    ConstrainedMaxResult
        ``delta_s_max = subsidy + residual_budget * orthogonal_room`` where
        ``subsidy = <v, delta_c_star>``, ``residual_budget = sqrt(B^2 - ||delta_c_star||^2)``
        and ``orthogonal_room = ||P_{C^perp} v||``.
    """
    v = as_vector(v)
    target = as_vector(delta_c_star)
    if target.shape != (capset.d,) or v.shape != (capset.d,):
        raise DimensionMismatch(f"expected vectors of length {capset.d}")
    if not budget_radius > 0:
        raise ValueError(f"budget radius must be positive, got {budget_radius}")
    target_norm = float(np.linalg.norm(target))
    off = float(np.linalg.norm(target - project(capset, target)))
    if off > SUBSPACE_TOL * max(1.0, target_norm):
        raise ConstraintNotInSubspace(f"constraint has a component of norm {off:.3g} outside the capability span")
    if target_norm > budget_radius * (1 + _FEASIBLE_SLACK):
        raise InfeasibleBudget(f"||delta_c|| = {target_norm:g} exceeds the budget {budget_radius:g}")

    residual_budget = _sqrt0(budget_radius**2 - target_norm**2)
    subsidy = float(v @ target)
    perp = orthogonal_residual(capset, v)
    room = float(np.linalg.norm(perp))
    if room < TAU_ONE_ROOM:
        return ConstrainedMaxResult(subsidy, Perturbation.of(target), residual_budget, subsidy, 0.0)
    delta = target + residual_budget * perp / room
    return ConstrainedMaxResult(
        delta_s_max=subsidy + residual_budget * room,
        optimizer=Perturbation.of(delta),
        residual_budget=residual_budget,
        subsidy=subsidy,
        orthogonal_room=room,
    )


def free_safety(tax: float, budget_radius: float) -> float:
    """Safety gain available at zero capability cost, ``B * sqrt(1 - tau)``."""
    return budget_radius * _sqrt0(1.0 - tax)


@dataclass(frozen=True, eq=False)
class Budget:
    """Perturbation budget ``delta^T F delta <= radius^2`` (``F = I`` when ``fisher`` is None)."""

    radius: float
    fisher: np.ndarray | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"budget radius must be positive, got {self.radius}")
        if self.fisher is not None:
            f = np.array(self.fisher, dtype=float)
            if f.ndim != 2 or f.shape[0] != f.shape[1]:
                raise DimensionMismatch(f"Fisher matrix must be square, got shape {f.shape}")
            f.setflags(write=False)
            object.__setattr__(self, "fisher", f)

    @property
    def isotropic(self) -> bool:
        return self.fisher is None

    def contains(self, delta) -> bool:
        delta = as_vector(delta)
        q = delta @ delta if self.fisher is None else delta @ self.fisher @ delta
        return q <= self.radius**2 * (1 + 1e-12)


@dataclass(frozen=True, eq=False)
class Whitening:
    """Whitened view of an anisotropic problem.

    ``directions[i]`` is ``F^{-1/2} u_i`` renormalized and ``scales[i]`` the
    norm that was divided out. A whitened inner product ``<u~_i, delta~>``
    corresponds to the raw one ``<u_i, delta>`` multiplied by ``scales[i]``.
    """

    budget_radius: float
    directions: tuple[Direction, ...]
    scales: np.ndarray
    eigenvalues: np.ndarray
    inv_sqrt: np.ndarray

    @property
    def condition_number(self) -> float:
        return float(self.eigenvalues[-1] / self.eigenvalues[0])

    @property
    def raw_radius_range(self) -> tuple[float, float]:
        """Shortest and longest semi-axis of the raw-space budget ellipsoid."""
        return (
            self.budget_radius / math.sqrt(self.eigenvalues[-1]),
            self.budget_radius / math.sqrt(self.eigenvalues[0]),
        )

    def raw_gain(self, index: int, whitened_gain: float) -> float:
        return float(self.scales[index]) * whitened_gain

    def unwhiten(self, delta_tilde) -> np.ndarray:
        """Map a whitened perturbation back to raw coordinates, ``F^{-1/2} delta~``."""
        return self.inv_sqrt @ as_vector(delta_tilde)

    def diagnostics(self) -> dict:
        lo, hi = self.raw_radius_range
        return {
            "min_eigenvalue": float(self.eigenvalues[0]),
            "max_eigenvalue": float(self.eigenvalues[-1]),
            "condition_number": self.condition_number,
            "raw_radius_min": lo,
            "raw_radius_max": hi,
        }


def whiten(budget: Budget, directions: Sequence) -> Whitening:
    """Change coordinates so the ellipsoidal budget becomes a ball of the same radius."""
    dirs = [as_vector(u) for u in directions]
    d = dirs[0].size if dirs else (budget.fisher.shape[0] if budget.fisher is not None else 0)
    f = np.eye(d) if budget.fisher is None else budget.fisher
    if f.shape != (d, d):
        raise DimensionMismatch(f"Fisher matrix has shape {f.shape}, directions have length {d}")
    scale = max(1.0, float(np.max(np.abs(f))))
    if np.max(np.abs(f - f.T)) > SYMMETRY_TOL * scale:
        raise NotSPD("Fisher matrix is not symmetric")
    w, q = np.linalg.eigh(0.5 * (f + f.T))
    if not (w[-1] > 0 and w[0] > SPD_TOL * w[-1]):
        raise NotSPD(f"Fisher eigenvalue {w[0]:.3g} is not positive (largest {w[-1]:.3g})")
    inv_sqrt = (q / np.sqrt(w)) @ q.T
    out, scales = [], []
    for u in dirs:
        if u.shape != (d,):
            raise DimensionMismatch(f"expected vectors of length {d}")
        x = inv_sqrt @ u
        scales.append(float(np.linalg.norm(x)))
        out.append(normalize_direction(x))
    inv_sqrt.setflags(write=False)
    return Whitening(
        budget_radius=budget.radius,
        directions=tuple(out),
        scales=np.array(scales),
        eigenvalues=w,
        inv_sqrt=inv_sqrt,
    )
