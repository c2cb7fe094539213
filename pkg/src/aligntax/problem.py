"""Problem files and CSV sidecars.

A problem file is one JSON object::

    {
      "dim": 2,
      "safety": [1, 0],                      # or [[...], [...]] for two directions
      "capabilities": {"math": [0, 1]},
      "budget_radius": 1.0,
      "fisher": [1, 4],                      # optional: diagonal or dense matrix
      "capability_target": {"math": 0.2}     # optional: P_C delta = sum coef * c_name
    }

Vectors are normalized on ingest; a warning is logged when an input norm
is off by more than ``NORM_WARN_TOL``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, ParseError, SchemaError, ZeroVector
from .geometry import ZERO_NORM_TOL, Direction

log = logging.getLogger(__name__)

NORM_WARN_TOL = 1e-6
_EXACT_NORM_TOL = 1e-12

_REQUIRED = ("dim", "safety", "capabilities", "budget_radius")
_OPTIONAL = ("fisher", "capability_target")


@dataclass(frozen=True, eq=False)
class ProblemFile:
    dim: int
    safety: tuple[Direction, ...]
    capabilities: dict[str, Direction]
    budget_radius: float
    fisher: np.ndarray | None = None
    capability_target: dict[str, float] = field(default_factory=dict)
    renormalized: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        return list(self.capabilities)

    def capability(self, name: str) -> Direction:
        try:
            return self.capabilities[name]
        except KeyError:
            raise SchemaError(f"unknown capability {name!r}; known: {', '.join(self.capabilities)}") from None

    def canonical(self) -> dict:
        """Plain-JSON form; parsing it back gives an identical problem."""
        out: dict[str, Any] = {
            "dim": self.dim,
            "safety": [s.coords.tolist() for s in self.safety] if len(self.safety) > 1 else self.safety[0].coords.tolist(),
            "capabilities": {k: v.coords.tolist() for k, v in self.capabilities.items()},
            "budget_radius": self.budget_radius,
        }
        if self.fisher is not None:
            out["fisher"] = self.fisher.tolist()
        if self.capability_target:
            out["capability_target"] = dict(self.capability_target)
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ParseError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise ParseError(f"non-finite number {name} is not allowed")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _vector(raw, dim: int, what: str) -> np.ndarray:
    if not isinstance(raw, list) or not all(_is_number(x) for x in raw):
        raise SchemaError(f"{what} must be a list of numbers")
    if len(raw) != dim:
        raise DimensionMismatch(f"{what} has length {len(raw)}, expected dim = {dim}")
    return np.array(raw, dtype=float)


def _unit(x: np.ndarray, what: str, renormalized: list[str]) -> Direction:
    n = float(np.linalg.norm(x))
    if n <= ZERO_NORM_TOL:
        raise ZeroVector(f"{what} has zero norm")
    if abs(n - 1.0) > NORM_WARN_TOL:
        log.warning("%s has norm %.9g; normalizing", what, n)
        renormalized.append(what)
    # leave vectors that are already unit to rounding untouched so canonical output is a fixed point
    return Direction(x if abs(n - 1.0) <= _EXACT_NORM_TOL else x / n)


def problem_from_dict(doc: Mapping) -> ProblemFile:
    if not isinstance(doc, Mapping):
        raise SchemaError("problem must be a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise SchemaError(f"missing field(s): {', '.join(missing)}")
    unknown = sorted(set(doc) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise SchemaError(f"unknown field(s): {', '.join(unknown)}")

    dim = doc["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise SchemaError(f"dim must be a positive integer, got {dim!r}")
    radius = doc["budget_radius"]
    if not _is_number(radius) or not radius > 0 or not math.isfinite(radius):
        raise SchemaError(f"budget_radius must be a positive number, got {radius!r}")

    renorm: list[str] = []
    raw_safety = doc["safety"]
    if isinstance(raw_safety, list) and raw_safety and all(isinstance(r, list) for r in raw_safety):
        if len(raw_safety) > 2:
            raise SchemaError(f"safety holds at most two directions, got {len(raw_safety)}")
        safety = tuple(
            _unit(_vector(r, dim, f"safety[{i}]"), f"safety[{i}]", renorm) for i, r in enumerate(raw_safety)
        )
    else:
        safety = (_unit(_vector(raw_safety, dim, "safety"), "safety", renorm),)

    raw_caps = doc["capabilities"]
    if not isinstance(raw_caps, Mapping) or not raw_caps:
        raise SchemaError("capabilities must be a non-empty object mapping names to vectors")
    caps = {}
    for name, vec in raw_caps.items():
        caps[name] = _unit(_vector(vec, dim, f"capability {name!r}"), name, renorm)

    fisher = None
    if doc.get("fisher") is not None:
        raw = doc["fisher"]
        if isinstance(raw, list) and raw and all(isinstance(r, list) for r in raw):
            if len(raw) != dim:
                raise DimensionMismatch(f"fisher has {len(raw)} rows, expected {dim}")
            fisher = np.vstack([_vector(r, dim, "fisher row") for r in raw])
        else:
            fisher = np.diag(_vector(raw, dim, "fisher diagonal"))
        fisher.setflags(write=False)

    target = {}
    if doc.get("capability_target") is not None:
        raw = doc["capability_target"]
        if not isinstance(raw, Mapping):
            raise SchemaError("capability_target must map capability names to coefficients")
        for name, coef in raw.items():
            if name not in caps:
                raise SchemaError(f"capability_target names unknown capability {name!r}")
            if not _is_number(coef):
                raise SchemaError(f"capability_target[{name!r}] must be a number")
            target[name] = float(coef)

    return ProblemFile(dim, safety, caps, float(radius), fisher, target, tuple(renorm))


def parse_problem_text(text: str) -> ProblemFile:
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return problem_from_dict(doc)


def parse_problem(path) -> ProblemFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not UTF-8 text") from exc
    return parse_problem_text(text)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """CSV with a header row, commas, shortest round-trip floats and LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))
