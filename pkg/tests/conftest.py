import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Numeric property tests routinely exceed hypothesis' default deadline on a
# loaded CI box; the suite relies on example counts, not wall-clock policing.
settings.register_profile(
    "numeric",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("numeric")


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
