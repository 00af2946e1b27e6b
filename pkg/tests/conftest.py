import itertools

import numpy as np
import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line; all lines are printed at the end of the run."""
    def record(label: str, ok: bool, detail: str = ""):
        _ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        print(_ACCEPTANCE_LINES[-1])
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_force_weights(d, q, p, n, leaf_colors):
    """Root weights by explicit tree walk; independent of the package's enumerator.

    ``leaf_colors`` are 0-based in lexicographic leaf order.
    """
    levels = [d ** k for k in range(n)]
    interior = sum(levels)
    w = [0.0] * q
    for spins in itertools.product(range(q), repeat=interior):
        weight = 1.0
        offset = 0
        for k, size in enumerate(levels):
            for t in range(size):
                parent = spins[offset + t]
                for c in range(d):
                    if k + 1 < n:
                        child = spins[offset + size + t * d + c]
                    else:
                        child = leaf_colors[t * d + c]
                    if child == parent:
                        weight *= p
            offset += size
        w[spins[0]] += weight
    return np.array(w)
