import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scoring_auctions.core import CostParams, uniform
from scoring_auctions.scoring import ScoringRule

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# fixed-cost range on which the ratio rule never hits the q <= 1 cap
FREE = (1.0, 2.0, 0.1, 0.5)


@pytest.fixture
def pqr():
    return ScoringRule("pqr")


@pytest.fixture
def qd():
    return ScoringRule("qd", qbar=2.0)


@pytest.fixture
def free_params():
    return CostParams(2.0, *FREE)


@pytest.fixture
def g_free(free_params):
    return uniform(free_params, 20, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
