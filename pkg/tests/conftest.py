import math

import numpy as np
import pytest

from mtflow.grid import Domain, build_masked_grid, build_radial_grid


@pytest.fixture(scope="session")
def ball1024():
    return build_radial_grid(1.0, 1024)


@pytest.fixture(scope="session")
def ball256():
    return build_radial_grid(1.0, 256)


@pytest.fixture(scope="session")
def disc64():
    """Cartesian unit disc, h = 1/64."""
    return build_masked_grid(Domain.ball(1.0), 1 / 64)


@pytest.fixture(scope="session")
def annulus32():
    return build_masked_grid(Domain.annulus(1.0, 0.3), 1 / 32)


def random_h10(grid, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.size)
    v[grid.boundary] = 0.0
    return v


E_PARABOLA = 0.726731663056246716827  # E(1 - r^2) on B_1, mpmath quadrature
MASS_PARABOLA = 1.972339121485640196673  # int (1-r^2)^2 e^{(1-r^2)^2} on B_1
E_MOSER = 0.0787170755517373  # E(m_{1/e,1}), mpmath quadrature
MASS_MOSER = 0.1667934864557640
ALPHA_MOSER_HALF = 4.942892608253677  # E(sqrt(alpha) m_{1/e,1}) = 0.5, continuum
FOUR_PI = 4 * math.pi


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; it is printed and repeated in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
