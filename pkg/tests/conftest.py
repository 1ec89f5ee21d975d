"""Shared pytest fixtures"""

import numpy as np
import pytest

from core.logging import setup_logging
from tests.factories import random_walk_panel


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    setup_logging("WARNING", "console")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def panel():
    """400 days, two assets, price plus two alternative features"""
    return random_walk_panel()
