"""Directions, capability subspaces, projections and the alignment tax rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroVector

ZERO_NORM_TOL = 1e-12
UNIT_NORM_TOL = 1e-12
RANK_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Direction:
    """A unit vector in R^d.

    Use :func:`normalize_direction` for inputs that are not already unit norm.
    """

    coords: np.ndarray

    def __post_init__(self):
        coords = _frozen(self.coords)
        if coords.ndim != 1 or coords.size < 1:
            raise DimensionMismatch("a direction needs a non-empty 1-d coordinate vector")
        if abs(np.linalg.norm(coords) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("Direction coordinates must have unit norm; use normalize_direction")
        object.__setattr__(self, "coords", coords)

    @property
    def d(self) -> int:
        return self.coords.size

    def __neg__(self) -> "Direction":
        return Direction(-self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


def as_vector(v) -> np.ndarray:
    if isinstance(v, Direction):
        return v.coords
    return np.asarray(v, dtype=float)


def _check_dim(d: int, *vectors) -> None:
    for v in vectors:
        if as_vector(v).shape != (d,):
            raise DimensionMismatch(f"expected a vector of length {d}, got shape {as_vector(v).shape}")


def normalize_direction(v, zero_norm_tolerance: float = ZERO_NORM_TOL) -> Direction:
    """Return ``v / ||v||`` as a :class:`Direction`.

    Raises :class:`ZeroVector` when ``||v|| <= zero_norm_tolerance``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatch("expected a non-empty 1-d vector")
    norm = np.linalg.norm(v)
    if not norm > zero_norm_tolerance:
        raise ZeroVector(f"vector norm {norm:.3g} is below {zero_norm_tolerance:g}")
    return Direction(v / norm)


@dataclass(frozen=True, eq=False)
class CapabilitySet:
    """Ordered capability directions with their Gram matrix and an orthonormal basis of their span.

    ``basis`` is d x r where r is the numerical rank of the stacked directions.
    """

    directions: tuple[Direction, ...]
    gram: np.ndarray
    basis: np.ndarray
    rank_tolerance: float = RANK_TOL
    singular_values: np.ndarray = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.directions[0].d

    @property
    def m(self) -> int:
        return len(self.directions)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """The d x m matrix with the capability directions as columns."""
        return np.column_stack([c.coords for c in self.directions])

    def coefficients(self, v) -> np.ndarray:
        """Coordinates of ``P_C v`` in the orthonormal basis."""
        v = as_vector(v)
        _check_dim(self.d, v)
        return self.basis.T @ v

    def inner_products(self, v) -> np.ndarray:
        """``C^T v``: the raw overlaps with each capability direction."""
        v = as_vector(v)
        _check_dim(self.d, v)
        return self.matrix.T @ v


def build_capability_set(vectors: Sequence, rank_tolerance: float = RANK_TOL) -> CapabilitySet:
    """Normalize ``vectors`` and build the capability subspace they span.

    The numerical rank counts singular values above ``rank_tolerance`` times
    the largest one, so duplicated or nearly dependent directions collapse.
    """
    if len(vectors) == 0:
        raise ValueError("a capability set needs at least one direction")
    dirs = []
    for v in vectors:
        dirs.append(v if isinstance(v, Direction) else normalize_direction(v))
    d = dirs[0].d
    for c in dirs[1:]:
        if c.d != d:
            raise DimensionMismatch(f"capability directions have mixed dimensions {d} and {c.d}")

    mat = np.column_stack([c.coords for c in dirs])
    # c and -c must yield a bit-identical basis, so factor sign-canonical columns.
    pivots = np.argmax(np.abs(mat), axis=0)
    signs = np.where(mat[pivots, np.arange(mat.shape[1])] < 0, -1.0, 1.0)
    u, s, _ = np.linalg.svd(mat * signs, full_matrices=False)
    r = int(np.count_nonzero(s > rank_tolerance * s[0]))
    gram = mat.T @ mat
    gram = 0.5 * (gram + gram.T)
    return CapabilitySet(
        directions=tuple(dirs),
        gram=_frozen(gram),
        basis=_frozen(u[:, :r]),
        rank_tolerance=rank_tolerance,
        singular_values=_frozen(s),
    )


def project(capset: CapabilitySet, v) -> np.ndarray:
    """Orthogonal projection ``P_C v`` onto the capability subspace."""
    return capset.basis @ capset.coefficients(v)


def orthogonal_residual(capset: CapabilitySet, v) -> np.ndarray:
    """``P_{C^perp} v = v - P_C v``."""
    return as_vector(v) - project(capset, v)


def clamp_unit(x: float) -> float:
    return min(1.0, max(-1.0, float(x)))


def principal_angle(v, c) -> float:
    """Angle in [0, pi] between two directions."""
    v, c = as_vector(v), as_vector(c)
    if v.shape != c.shape:
        raise DimensionMismatch(f"shapes {v.shape} and {c.shape} differ")
    return math.acos(clamp_unit(v @ c))


@dataclass(frozen=True)
class TaxReport:
    joint_tax: float
    per_task: tuple[tuple[int, float], ...]
    free_safety_fraction: float

    def as_dict(self, names: Sequence[str] | None = None) -> dict:
        names = names or [str(i) for i, _ in self.per_task]
        return {
            "joint_tax": self.joint_tax,
            "free_safety_fraction": self.free_safety_fraction,
            "per_task": {names[i]: t for i, t in self.per_task},
        }


def tax_rate(v, capset: CapabilitySet) -> TaxReport:
    """Alignment tax of safety direction ``v`` against the capability subspace.

    ``joint_tax`` is ``||P_C v||^2``, computed through the orthonormal basis
    rather than by inverting the Gram matrix. ``per_task`` holds the squared
    overlap with each individual capability; these do not sum to the joint
    tax unless the capabilities are orthonormal.
    """
    v = as_vector(v)
    coeffs = capset.coefficients(v)
    joint = min(1.0, max(0.0, float(coeffs @ coeffs)))
    overlaps = capset.inner_products(v)
    per_task = tuple((i, min(1.0, float(x * x))) for i, x in enumerate(overlaps))
    return TaxReport(
        joint_tax=joint,
        per_task=per_task,
        free_safety_fraction=math.sqrt(max(0.0, 1.0 - joint)),
    )
