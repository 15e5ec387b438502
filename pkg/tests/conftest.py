import itertools
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

# two points moved one unit along the second feature
FIXTURE_X = np.array([[0.0, 0.0], [1.0, 0.0]])
FIXTURE_Y = np.array([[0.0, 1.0], [1.0, 1.0]])


def brute_force_cost(z, p):
    """Minimum of mean z^p over every permutation, by enumeration."""
    n = z.shape[0]
    cost = z**p
    return min(cost[np.arange(n), perm].sum() / n for perm in itertools.permutations(range(n)))


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def fixture_pair():
    return FIXTURE_X.copy(), FIXTURE_Y.copy()


@pytest.fixture
def fixture_paths():
    return DATA / "fixture_source.csv", DATA / "fixture_target.csv"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in name and report.when == "call":
                label = name.split("::")[-1][len("test_"):]
                lines.append((label, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for label, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {label}")
