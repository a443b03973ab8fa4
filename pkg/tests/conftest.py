import numpy as np
import pytest

from tokenbridge.core import SystemConfig


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
