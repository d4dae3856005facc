import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_weights(rng, p, alpha=1.0):
    from csmark.grid import BinWeights
    return BinWeights.normalized(rng.dirichlet(np.full(p, alpha)))
