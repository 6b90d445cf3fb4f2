import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reproduction check (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_tone():
    """16x16 sRGB image: red left half, blue right half"""
    image = np.zeros((16, 16, 3))
    image[:, :8] = (1.0, 0.0, 0.0)
    image[:, 8:] = (0.0, 0.0, 1.0)
    return image
