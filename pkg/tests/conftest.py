import numpy as np
import pytest

from extremal import gauge as G


def random_points(rng, k, n, scale=1.0):
    return scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


BODIES = {
    "ball2": lambda: G.ball(2),
    "polydisc2": lambda: G.polydisc(2),
    "ellipsoid12": lambda: G.complex_ellipsoid(2, [1, 2]),
    "polydisc_r": lambda: G.polydisc(3, [1.0, 0.5, 2.0]),
    "polyhedral": lambda: G.polyhedral([[1, 0], [-1, 0], [1j, 0], [-1j, 0],
                                        [0, 1], [0, -1], [0, 1j], [0, -1j], [0.7, 0.7]]),
}


@pytest.fixture(params=sorted(BODIES))
def body(request):
    return BODIES[request.param]()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
