import numpy as np
import pytest
from hypothesis import settings

from qptdoa.region import build_region
from qptdoa.scenarios import european_scenario

# compiled kernels make first calls slow; timing limits would only flake
settings.register_profile("qptdoa", deadline=None, max_examples=50)
settings.load_profile("qptdoa")


@pytest.fixture(scope="session")
def scenario():
    return european_scenario()


@pytest.fixture(scope="session")
def region(scenario):
    return build_region(scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
