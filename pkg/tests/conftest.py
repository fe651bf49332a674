import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from compact_helmholtz.core import BoundaryConfig, Kind, dirichlet, make_setup, neumann, sommerfeld

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FACE = {"D": dirichlet, "N": neumann, "S": sommerfeld}
# lateral kind, bottom, top
BC_CODES = ["".join(c) for c in itertools.product("DN", "DNS", "DNS")]

# acceptance lines collected across the session, printed in the terminal summary
ACCEPTANCE_LINES = {}


def bc_from_code(code: str) -> BoundaryConfig:
    lat, z0, z1 = code
    return BoundaryConfig(FACE[lat](), FACE[lat](), FACE[lat](), FACE[lat](), FACE[z0](), FACE[z1]())


def small_setup(code: str, n: int, k=3.0, src=None) -> "Setup":
    """Homogeneous-data setup with ``n`` intervals per axis."""
    return make_setup(1.0 / n, k, bc_from_code(code), src, dim=3, check_resolution=False)


def random_field(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel(a, b) -> float:
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
