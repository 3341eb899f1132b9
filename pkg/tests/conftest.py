import numpy as np
import pytest

from feqt.fdata import (
    Grid,
    GroupedPairedSample,
    PairedFunctionalSample,
    equispaced_grid,
)

#: (criterion number, passed, detail) records printed after the run so the
#: acceptance outcomes stay visible even with captured stdout.
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def make_grouped(rng, n_groups=4, group_size=5, n_points=6, group_sizes=None):
    """Random well-conditioned grouped paired sample for tests."""
    grid = equispaced_grid(n_points)
    sizes = group_sizes if group_sizes is not None else [group_size] * n_groups
    groups = []
    for n in sizes:
        alpha = rng.normal(0.0, 0.4, (2, n_points))
        y = alpha[None] + rng.normal(0.0, 0.5, (n, 2, n_points))
        groups.append(PairedFunctionalSample(grid, y[:, 0], y[:, 1]))
    return GroupedPairedSample(grid, tuple(groups))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid25():
    return equispaced_grid(25)
