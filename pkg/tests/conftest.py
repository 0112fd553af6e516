import math

import numpy as np
import pytest
from hypothesis import settings

from levyaa.hypotheses import critical_delta
from levyaa.scenario import builtin_scenario

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# delta* for the builtin heat example, frozen from the closed-form oracle
# (tests/test_hypotheses.py::test_frozen_delta_star_matches_quadrature_oracle)
DELTA_STAR = 1.4198376


@pytest.fixture(scope="session")
def example():
    return builtin_scenario()


@pytest.fixture(scope="session")
def delta_star(example):
    return critical_delta(example)


@pytest.fixture(scope="session")
def contracting(delta_star):
    """Heat example at half the critical amplitude with a non-trivial phase."""
    return builtin_scenario(delta=delta_star / 2, phase=math.pi / 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
