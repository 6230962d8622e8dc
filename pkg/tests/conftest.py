import numpy as np
import pytest

from entroflow.grid import PERIODIC, WALL, Grid1D, ScalarField


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def periodic_field(n, fn, length=1.0):
    g = Grid1D(n, length, PERIODIC)
    return ScalarField.from_function(g, fn)


def wall_field(n, fn, length=1.0):
    g = Grid1D(n, length, WALL)
    return ScalarField.from_function(g, fn)


def smooth_positive(rng, grid, modes=4, mean=1.0, amplitude=0.3):
    """Random smooth positive field (cosines on wall grids keep h_x = 0 at the ends)."""
    x = grid.x / grid.length
    k = np.arange(1, modes + 1)
    a = rng.standard_normal(modes) / k**2
    b = rng.standard_normal(modes) / k**2 if grid.periodic else np.zeros(modes)
    phase = (2 if grid.periodic else 1) * np.pi * np.outer(x, k)
    w = np.cos(phase) @ a + np.sin(phase) @ b
    return ScalarField(grid, mean + amplitude * w / np.max(np.abs(w)))


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """``record(number, ok, detail)`` prints one acceptance verdict line."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        with capsys.disabled():
            print("\n" + line)
        request.config.stash.setdefault(ACCEPTANCE_KEY, []).append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
