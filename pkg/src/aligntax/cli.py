"""Command line front end: ``aligntax <command> [options]``.

Every command prints one JSON report (or writes it to ``--output``). The
report holds the command name, a SHA-256 digest of the canonical inputs,
the command-specific results, the tool version and, for stochastic
commands, the seed. Reports carry no timestamps, so identical inputs give
byte-identical output.

When the problem file has a ``fisher`` entry, all directions are whitened
first and results are computed in whitened coordinates; raw-unit gains are
reported next to them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import __version__
from .conflict import (
    SafetyPair,
    classify_capability,
    decomposition_bound,
    effective_angle_multi,
    equal_gain_ceiling,
    equal_improvement,
    safety_safety_frontier,
)
from .errors import AlignTaxError, SchemaError, UsageError
from .frontier import (
    Budget,
    Whitening,
    free_safety,
    frontier_curve,
    frontier_safety,
    max_safety_constrained,
    optimal_delta_single,
    whiten,
)
from .geometry import CapabilitySet, Direction, build_capability_set, principal_angle, tax_rate
from .oracle import OracleConfig, oracle_equal_improvement, oracle_max_safety, oracle_max_safety_constrained
from .problem import ProblemFile, csv_text, parse_problem
from .scaling import PackingSpec, irreducible_tax, scaling_series

log = logging.getLogger("aligntax")

COMMANDS = ("tax", "frontier", "optimal-delta", "max-safety", "conflict", "classify", "scaling-sim", "whiten", "audit")
STOCHASTIC = ("scaling-sim", "audit")


@dataclass
class Workspace:
    """Problem directions in the coordinates where the budget is a ball."""

    problem: ProblemFile
    safety: list[Direction]
    caps: dict[str, Direction]
    capset: CapabilitySet
    whitening: Whitening | None

    @property
    def radius(self) -> float:
        return self.problem.budget_radius

    def scale(self, index: int) -> float:
        """Raw-unit factor for direction ``index`` (safety first, then capabilities)."""
        return 1.0 if self.whitening is None else float(self.whitening.scales[index])

    def cap_index(self, name: str) -> int:
        return len(self.safety) + list(self.caps).index(name)

    def target(self) -> np.ndarray:
        """``sum coef * c_name`` over ``capability_target``, in working coordinates."""
        t = np.zeros(self.problem.dim)
        for name, coef in self.problem.capability_target.items():
            t += coef * self.caps[name].coords
        return t


def workspace(problem: ProblemFile) -> Workspace:
    safety = list(problem.safety)
    caps = dict(problem.capabilities)
    wh = None
    if problem.fisher is not None:
        wh = whiten(Budget(problem.budget_radius, problem.fisher), [*safety, *caps.values()])
        safety = list(wh.directions[: len(safety)])
        caps = dict(zip(caps, wh.directions[len(safety) :]))
    return Workspace(problem, safety, caps, build_capability_set(list(caps.values())), wh)


def _pick_safety(ws: Workspace, index: int) -> tuple[int, Direction]:
    if not 1 <= index <= len(ws.safety):
        raise UsageError(f"--safety {index} but the problem has {len(ws.safety)} safety direction(s)")
    return index - 1, ws.safety[index - 1]


def _pick_capability(ws: Workspace, name: str | None) -> str:
    if name is None:
        return next(iter(ws.caps))
    ws.problem.capability(name)
    return name


def _pair(ws: Workspace) -> SafetyPair:
    if len(ws.safety) != 2:
        raise SchemaError("this command needs two safety directions")
    return SafetyPair.from_vectors(*ws.safety)


# commands


def cmd_tax(ws: Workspace, opts) -> tuple[dict, list]:
    out = []
    for s in ws.safety:
        rep = tax_rate(s, ws.capset)
        d = rep.as_dict(list(ws.caps))
        d["free_safety"] = free_safety(rep.joint_tax, ws.radius)
        out.append(d)
    return {"budget_radius": ws.radius, "per_safety": out, "rank": ws.capset.rank}, []


def cmd_frontier(ws: Workspace, opts) -> tuple[dict, list]:
    i, v = _pick_safety(ws, opts.safety)
    name = _pick_capability(ws, opts.alpha_from)
    alpha = principal_angle(v, ws.caps[name])
    curve = frontier_curve(alpha, ws.radius, opts.samples)
    sv, sc = ws.scale(i), ws.scale(ws.cap_index(name))
    rows = [[p.delta_c * sc, p.delta_s * sv] for p in curve.points]
    res = {
        "capability": name,
        "alpha": alpha,
        "budget_radius": ws.radius,
        "points": [{"delta_c": p.delta_c, "delta_s": p.delta_s} for p in curve.points],
    }
    if ws.whitening is not None:
        res["raw_points"] = [{"delta_c": a, "delta_s": b} for a, b in rows]
    return res, [["delta_c", "delta_s"], rows]


def cmd_optimal_delta(ws: Workspace, opts) -> tuple[dict, list]:
    if opts.delta_c is None:
        raise UsageError("optimal-delta needs --delta-c")
    i, v = _pick_safety(ws, opts.safety)
    name = _pick_capability(ws, opts.capability or opts.alpha_from)
    c = ws.caps[name]
    pert = optimal_delta_single(v, c, ws.radius, opts.delta_c)
    res = {
        "capability": name,
        "delta_c": opts.delta_c,
        "delta": pert.delta.tolist(),
        "norm": pert.norm,
        "safety_gain": float(v.coords @ pert.delta),
        "capability_change": float(c.coords @ pert.delta),
        "frontier_value": frontier_safety(principal_angle(v, c), ws.radius, opts.delta_c),
    }
    if ws.whitening is not None:
        res["raw_delta"] = ws.whitening.unwhiten(pert.delta).tolist()
    return res, []


def cmd_max_safety(ws: Workspace, opts) -> tuple[dict, list]:
    i, v = _pick_safety(ws, opts.safety)
    target = ws.target()
    r = max_safety_constrained(v, ws.capset, target, ws.radius)
    tau = tax_rate(v, ws.capset).joint_tax
    res = {
        "delta_s_max": r.delta_s_max,
        "subsidy": r.subsidy,
        "residual_budget": r.residual_budget,
        "orthogonal_room": r.orthogonal_room,
        "optimizer": r.optimizer.delta.tolist(),
        "capability_target": dict(ws.problem.capability_target),
        "free_safety": free_safety(tau, ws.radius),
    }
    if ws.whitening is not None:
        res["raw_delta_s_max"] = r.delta_s_max * ws.scale(i)
        res["raw_optimizer"] = ws.whitening.unwhiten(r.optimizer.delta).tolist()
    return res, []


def cmd_conflict(ws: Workspace, opts) -> tuple[dict, list]:
    pair = _pair(ws)
    eff = effective_angle_multi(pair, ws.capset)
    tau1 = tax_rate(pair.v1, ws.capset).joint_tax
    tau2 = tax_rate(pair.v2, ws.capset).joint_tax
    tnorm = float(np.linalg.norm(ws.target()))
    b_res = math.sqrt(max(0.0, ws.radius**2 - tnorm**2))
    s2 = np.linspace(-1.0, 1.0, opts.samples)
    rows = [[float(s), safety_safety_frontier(eff.theta, float(s))] for s in s2]
    res = {
        "rho": pair.rho,
        "cos_theta": eff.cos_theta,
        "theta": eff.theta,
        "correction": eff.correction,
        "tau": [tau1, tau2],
        "equal_improvement": equal_improvement(eff.theta),
        "residual_budget": b_res,
        "decomposition_bound": decomposition_bound(ws.radius, tnorm, eff.theta, tau1, tau2),
        "equal_gain_ceiling": equal_gain_ceiling(ws.radius, tnorm, eff.theta, tau1, tau2),
        "frontier": [{"s2": a, "s1": b} for a, b in rows],
    }
    return res, [["s2", "s1"], rows]


def cmd_classify(ws: Workspace | None, opts) -> tuple[dict, list]:
    if ws is None:
        if None in (opts.rho, opts.a, opts.b):
            raise UsageError("classify needs --input or all of --rho, --a, --b")
        return classify_capability(opts.rho, opts.a, opts.b).as_dict(), []
    pair = _pair(ws)
    out = {}
    for name, c in ws.caps.items():
        a, b = float(c.coords @ pair.v1.coords), float(c.coords @ pair.v2.coords)
        cls = classify_capability(pair.rho, a, b).as_dict()
        cls.update(a=a, b=b)
        out[name] = cls
    return {"rho": pair.rho, "capabilities": out}, []


def cmd_whiten(ws: Workspace, opts) -> tuple[dict, list]:
    if ws.whitening is None:
        raise SchemaError("whiten needs a fisher entry in the problem file")
    names = [f"safety[{i}]" for i in range(len(ws.safety))] + list(ws.caps)
    dirs = [*ws.safety, *ws.caps.values()]
    return {
        "diagnostics": ws.whitening.diagnostics(),
        "directions": {n: d.coords.tolist() for n, d in zip(names, dirs)},
        "scales": dict(zip(names, ws.whitening.scales.tolist())),
    }, []


def audit(ws: Workspace, cfg: OracleConfig, samples: int) -> dict:
    """Closed forms against the brute-force oracles; reports worst gaps."""
    tol = cfg.tolerance_bound(ws.radius)
    grid = np.linspace(-ws.radius, ws.radius, samples)
    per_cap = {}
    for name, c in ws.caps.items():
        gaps = []
        for s in ws.safety:
            alpha = principal_angle(s, c)
            for dc in grid:
                closed = frontier_safety(alpha, ws.radius, float(dc))
                gaps.append(abs(closed - oracle_max_safety(s, c, ws.radius, float(dc), cfg)))
        per_cap[name] = max(gaps)
    target = ws.target()
    cons = []
    for s in ws.safety:
        closed = max_safety_constrained(s, ws.capset, target, ws.radius).delta_s_max
        cons.append(abs(closed - oracle_max_safety_constrained(s, ws.capset, target, ws.radius, cfg)))
    out = {
        "grid_resolution": cfg.grid_resolution,
        "tolerance_bound": tol,
        "frontier_max_gap": per_cap,
        "constrained_max_gap": max(cons),
    }
    ok = max(per_cap.values()) <= tol and max(cons) <= tol
    if len(ws.safety) == 2:
        theta = effective_angle_multi(_pair(ws), ws.capset).theta
        gap = abs(equal_improvement(theta) - oracle_equal_improvement(theta, cfg))
        out["equal_improvement_gap"] = gap
        ok = ok and gap <= 1e-9
    out["pass"] = bool(ok)
    return out


def cmd_audit(ws: Workspace, opts) -> tuple[dict, list]:
    return audit(ws, OracleConfig(opts.grid, opts.seed), opts.samples), []


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _scaling(opts) -> tuple[dict, dict, list]:
    if not opts.d:
        raise UsageError("scaling-sim needs --d")
    spec_inputs = {"d": sorted(set(opts.d)), "gamma": list(opts.gamma), "m_prime": opts.m_prime, "trials": opts.trials}
    spec = PackingSpec(min(opts.d), tuple(opts.gamma), opts.m_prime)
    for d in spec_inputs["d"]:
        spec.at_dimension(d)
    series = scaling_series(spec, opts.d, opts.trials, opts.seed, workers=opts.threads)
    res = series.as_dict()
    res["irreducible_tax"] = irreducible_tax(spec)
    res["superposed"] = {str(d): spec.at_dimension(d).superposed for d in spec_inputs["d"]}
    header, rows = series.csv_rows()
    return spec_inputs, res, [header, rows]


HANDLERS = {
    "tax": cmd_tax,
    "frontier": cmd_frontier,
    "optimal-delta": cmd_optimal_delta,
    "max-safety": cmd_max_safety,
    "conflict": cmd_conflict,
    "classify": cmd_classify,
    "whiten": cmd_whiten,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aligntax", description="Alignment tax geometry toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="problem file (JSON)")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--csv", help="write a CSV sidecar (frontier, conflict, scaling-sim)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--audit", action="store_true", help="append closed-form vs oracle gaps")
    p.add_argument("--grid", type=int, default=4096, help="oracle grid resolution")
    p.add_argument("--d", type=_int_list, default=[])
    p.add_argument("--m-prime", type=int, default=0)
    p.add_argument("--gamma", type=_float_list, default=[])
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--safety", type=int, default=1, help="which safety direction (1 or 2)")
    p.add_argument("--alpha-from", help="capability defining the frontier angle")
    p.add_argument("--capability", help="capability for optimal-delta")
    p.add_argument("--delta-c", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    return p


def _options_echo(opts) -> dict:
    keys = ("samples", "safety", "alpha_from", "capability", "delta_c", "grid", "rho", "a", "b")
    return {k: getattr(opts, k) for k in keys if getattr(opts, k) is not None}


def run_command(command: str, problem: ProblemFile | None, opts) -> tuple[dict, list]:
    """Run one command; returns the report and an optional ``[header, rows]`` CSV payload."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    report = {"command": command, "version": __version__}
    if command in STOCHASTIC:
        report["seed"] = opts.seed
    if command == "scaling-sim":
        inputs, results, csv_payload = _scaling(opts)
        report["inputs"] = inputs
        report["inputs_digest"] = hashlib.sha256(
            json.dumps(inputs, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        report["results"] = results
        return report, csv_payload
    if problem is None and command != "classify":
        raise UsageError(f"{command} needs --input")
    if opts.samples < 2:
        raise UsageError("--samples must be at least 2")
    ws = workspace(problem) if problem is not None else None
    results, csv_payload = HANDLERS[command](ws, opts)
    if problem is not None:
        report["inputs_digest"] = problem.digest()
        if problem.renormalized:
            report["renormalized"] = list(problem.renormalized)
        if ws.whitening is not None:
            report["whitened"] = True
    else:
        report["inputs_digest"] = hashlib.sha256(
            json.dumps(_options_echo(opts), sort_keys=True).encode()
        ).hexdigest()
    report["options"] = _options_echo(opts)
    if opts.audit and ws is not None and command != "audit":
        report["seed"] = opts.seed
        results["audit"] = audit(ws, OracleConfig(opts.grid, opts.seed), min(opts.samples, 33))
    report["results"] = results
    return report, csv_payload


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def render(report: dict) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    opts = parser.parse_args(argv)
    try:
        if opts.threads < 1 or opts.trials < 1:
            raise UsageError("--threads and --trials must be positive")
        if opts.csv and opts.command not in ("frontier", "conflict", "scaling-sim"):
            raise UsageError(f"--csv is not available for {opts.command}")
        problem = parse_problem(opts.input) if opts.input else None
        report, csv_payload = run_command(opts.command, problem, opts)
        text = render(report)
        if opts.output:
            with open(opts.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if opts.csv:
            with open(opts.csv, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text(*csv_payload))
    except AlignTaxError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except ValueError as exc:
        log.error("UsageError: %s", exc)
        return UsageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
