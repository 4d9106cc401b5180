import numpy as np
import pytest

from gridbuffer.battery import BatteryParams, BatteryState
from gridbuffer.modes import QosConstraint, UtilityWeights, load_bundled_catalog


@pytest.fixture(scope="session")
def tiny_catalog():
    return load_bundled_catalog("tiny")


@pytest.fixture(scope="session")
def detection_catalog():
    return load_bundled_catalog("detection")


@pytest.fixture
def qos():
    return QosConstraint()


@pytest.fixture
def weights():
    return UtilityWeights()


@pytest.fixture
def params():
    return BatteryParams()


@pytest.fixture
def mid_state(params):
    return BatteryState(0.5 * params.capacity_mwh)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
