import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from moving_obstacles.boundary import (
    CircleCurve,
    PeriodicProfile,
    StefanovWallParams,
    TranslatingCurve,
    build_stefanov_wall,
)

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def unit_circle():
    return CircleCurve()


@pytest.fixture(scope="session")
def wall():
    """Default wall: f = sin(2 pi z), k = 1, M = L = 2."""
    return build_stefanov_wall(StefanovWallParams(k=1, M=2.0, L=2.0, f=PeriodicProfile.sine()))


@pytest.fixture(scope="session")
def slow_circle():
    """Circle of radius 1/2 whose center oscillates with peak speed 0.157."""
    return TranslatingCurve(radius=0.5, amplitude=(0.1, 0.0), time_period=4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
