import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kahlerlab.geometry import (
    Background,
    band_limited_field,
    build_potential,
    normalize_potential,
    safe_potential_scale,
)
from kahlerlab.spectral import Grid

settings.register_profile("lab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

# PASS/FAIL lines from the acceptance suite, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


def curved_potential(grid, rng, scale=0.3, max_mode=2, background=None):
    """Normalized random potential whose metric stays well inside the positive cone."""
    bg = background or Background(grid)
    phi = band_limited_field(grid, rng, max_mode)
    s = safe_potential_scale(grid, phi)
    return normalize_potential(build_potential(scale * min(s, 10.0) * phi, bg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1():
    return Grid(1, 32)


@pytest.fixture
def grid1_small():
    return Grid(1, 16)


@pytest.fixture
def grid2():
    return Grid(2, 8)


def calabi_small_data(grid):
    """The documented small two-mode initial family used with the Calabi oracle."""
    x, y = grid.coords
    tp = 2 * np.pi
    P0 = normalize_potential(build_potential(
        0.01 * np.cos(tp * y) + 0.005 * np.sin(tp * (x + y)), Background(grid)))
    from kahlerlab.geometry import project_tangent

    psi0 = project_tangent(P0, 0.02 * np.cos(tp * x) + 0.01 * np.sin(2 * tp * y))
    return P0, psi0
