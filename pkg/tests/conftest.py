import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from opelab.corr_core import FreeFieldCorrelations

settings.register_profile(
    "opelab",
    deadline=None,
    max_examples=int(os.environ.get("OPELAB_HYPOTHESIS_EXAMPLES", "40")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("opelab")


@pytest.fixture(scope="session")
def ff():
    """Free field in d=1 with [phi] = 0.2 and the calibrated kappa."""
    return FreeFieldCorrelations(1, 0.2)


@pytest.fixture(scope="session")
def ff_unit():
    """Same field with kappa forced to 1, handy for hand-computed values."""
    return FreeFieldCorrelations(1, 0.2, kappa=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
