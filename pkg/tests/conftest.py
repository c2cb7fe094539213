import numpy as np


def random_unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def pair_at_angle(rng, d, alpha):
    """Random unit ``v`` and ``c`` in R^d with ``arccos(<v, c>) == alpha``."""
    v = random_unit(rng, d)
    u = rng.standard_normal(d)
    u -= (u @ v) * v
    u /= np.linalg.norm(u)
    return v, np.cos(alpha) * v + np.sin(alpha) * u


def random_frontier_instance(rng):
    """(v, c, alpha, B, delta_c) with d <= 32, B in (0, 4]."""
    d = int(rng.integers(2, 33))
    alpha = float(rng.uniform(0, np.pi))
    v, c = pair_at_angle(rng, d, alpha)
    alpha = float(np.arccos(np.clip(v @ c, -1, 1)))
    budget = float(rng.uniform(1e-3, 4.0))
    delta_c = float(rng.uniform(-budget, budget))
    return v, c, alpha, budget, delta_c


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
