"""Brute-force optima used to falsify the closed forms.

Nothing here uses the frontier formulas: each oracle enumerates explicit
feasible perturbations in R^d, checks the budget on the actual vector and
keeps the best objective value. Results are therefore never above the true
optimum, and fall short of it by at most ``OracleConfig.tolerance_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintNotInSubspace, DimensionMismatch, InfeasibleBudget, InfeasibleTarget
from .geometry import CapabilitySet, as_vector, project

_FEASIBLE_SLACK = 1e-12


@dataclass(frozen=True)
class OracleConfig:
    grid_resolution: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.grid_resolution < 16:
            raise ValueError("grid_resolution must be at least 16")

    def tolerance_bound(self, budget_radius: float = 1.0) -> float:
        """Worst-case shortfall of a grid search, ``2 pi B / resolution``."""
        return 2 * math.pi * budget_radius / self.grid_resolution


def _unit_orthogonal_to(c: np.ndarray) -> np.ndarray:
    """Some unit vector orthogonal to unit ``c`` (zero vector when d == 1)."""
    if c.size == 1:
        return np.zeros(1)
    e = np.zeros_like(c)
    e[np.argmin(np.abs(c))] = 1.0
    w = e - (e @ c) * c
    return w / np.linalg.norm(w)


def oracle_max_safety(v, c, budget_radius: float, delta_c: float, cfg: OracleConfig = OracleConfig()) -> float:
    """Largest ``<v, delta>`` over a grid of feasible ``delta`` in ``span(v, c)``.

    Every candidate satisfies ``<c, delta> = delta_c`` exactly; it is written as
    ``delta_c * c + t * w`` with ``w`` the in-plane unit normal to ``c`` and
    ``t`` swept over a uniform grid on ``[-B, B]``. Candidates violating
    ``||delta|| <= B`` are discarded.
    """
    v, c = as_vector(v), as_vector(c)
    if v.shape != c.shape:
        raise DimensionMismatch(f"shapes {v.shape} and {c.shape} differ")
    if abs(delta_c) > budget_radius * (1 + _FEASIBLE_SLACK):
        raise InfeasibleTarget(f"|delta_c| = {abs(delta_c):g} exceeds the budget {budget_radius:g}")
    w = v - (v @ c) * c
    nw = np.linalg.norm(w)
    w = w / nw if nw > 1e-14 else _unit_orthogonal_to(c)

    n = cfg.grid_resolution
    t = -budget_radius + 2 * budget_radius * np.arange(n + 1) / n
    t = np.append(t, 0.0)
    deltas = delta_c * c[None, :] + t[:, None] * w[None, :]
    norms = np.linalg.norm(deltas, axis=1)
    feasible = norms <= budget_radius * (1 + _FEASIBLE_SLACK)
    return float(np.max(deltas[feasible] @ v))


def _complement_plane(capset: CapabilitySet, first: np.ndarray | None, rng) -> list[np.ndarray]:
    """Up to two orthonormal vectors of ``C^perp``, starting with ``first`` if given."""
    basis = [first] if first is not None else []
    room = capset.d - capset.rank
    while len(basis) < min(2, room):
        x = rng.standard_normal(capset.d)
        for _ in range(2):
            x = x - project(capset, x)
            for b in basis:
                x = x - (x @ b) * b
        nx = np.linalg.norm(x)
        if nx > 1e-8:
            basis.append(x / nx)
    return basis


def oracle_max_safety_constrained(
    v, capset: CapabilitySet, delta_c_star, budget_radius: float, cfg: OracleConfig = OracleConfig()
) -> float:
    """Largest ``<v, delta_c_star + delta_perp>`` over a fan of directions in ``C^perp``.

    The fan covers the 2-plane spanned by the normalized ``P_{C^perp} v`` and one
    random orthogonal complement direction, with a seeded random phase so the
    grid does not land on the optimum by construction. Along each ray the
    largest radius keeping ``||delta|| <= B`` is solved for exactly.
    """
    v, target = as_vector(v), as_vector(delta_c_star)
    if v.shape != (capset.d,) or target.shape != (capset.d,):
        raise DimensionMismatch(f"expected vectors of length {capset.d}")
    tnorm = float(np.linalg.norm(target))
    if np.linalg.norm(target - project(capset, target)) > 1e-8 * max(1.0, tnorm):
        raise ConstraintNotInSubspace("constraint is not inside the capability span")
    if tnorm > budget_radius * (1 + _FEASIBLE_SLACK):
        raise InfeasibleBudget(f"||delta_c|| = {tnorm:g} exceeds the budget {budget_radius:g}")

    rng = np.random.default_rng(cfg.seed)
    perp = v - project(capset, v)
    np_ = np.linalg.norm(perp)
    plane = _complement_plane(capset, perp / np_ if np_ > 1e-10 else None, rng)

    best = float(v @ target)
    if not plane:
        return best
    n = cfg.grid_resolution
    phi = rng.uniform(0, 2 * math.pi) + 2 * math.pi * np.arange(n) / n
    if len(plane) == 1:
        dirs = np.sign(np.cos(phi))[:, None] * plane[0][None, :]
    else:
        dirs = np.cos(phi)[:, None] * plane[0][None, :] + np.sin(phi)[:, None] * plane[1][None, :]
    # largest r >= 0 with ||target + r u||^2 <= B^2
    tu = dirs @ target
    r = -tu + np.sqrt(np.maximum(tu**2 - tnorm**2 + budget_radius**2, 0.0))
    gain = dirs @ v
    r = np.where(gain > 0, r, 0.0)
    deltas = target[None, :] + r[:, None] * dirs
    ok = np.linalg.norm(deltas, axis=1) <= budget_radius * (1 + _FEASIBLE_SLACK)
    if np.any(ok):
        best = max(best, float(np.max(deltas[ok] @ v)))
    return best


def oracle_equal_improvement(theta: float, cfg: OracleConfig = OracleConfig(), iterations: int = 200) -> float:
    """Locate by bisection the largest ``s`` in [0, 1] with ``s1(s) >= s`` on the safety-safety frontier."""
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    ct, st = math.cos(theta), math.sin(theta)

    def excess(s):
        return s * ct + st * math.sqrt(max(0.0, 1 - s * s)) - s

    if excess(1.0) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if excess(mid) >= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    return lo
