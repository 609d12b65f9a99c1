import numpy as np
import pytest

from neuralfc import modelpack
from neuralfc.cascade import CascadeGains
from neuralfc.dynamics import VehicleParams
from neuralfc.nn import MLP, POLICY_DIMS


@pytest.fixture
def params():
    return VehicleParams()


@pytest.fixture
def gains(params):
    return CascadeGains(hover_throttle=params.hover_throttle)


@pytest.fixture(scope="session")
def random_policy():
    """Canonical-shape policy with random weights (not trained)."""
    return MLP(POLICY_DIMS).init(np.random.default_rng(3))


@pytest.fixture(scope="session")
def policy_blob(random_policy):
    return modelpack.export(random_policy)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
