import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("cddm", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cddm")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_qpsk(rng, n):
    return (rng.choice([-1.0, 1.0], n) + 1j * rng.choice([-1.0, 1.0], n)) / np.sqrt(2)
