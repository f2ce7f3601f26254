import numpy as np
import pytest

from softarm import presets


@pytest.fixture
def arm():
    return presets.default_arm()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_states(rng, n, count, theta_range=(0.2, 1.5)):
    """Configurations with every theta bounded away from the straight pose."""
    q = np.empty((count, 2 * n))
    q[:, 0::2] = rng.uniform(-np.pi, np.pi, (count, n))
    q[:, 1::2] = rng.uniform(*theta_range, (count, n)) * rng.choice([-1, 1], (count, n))
    return q
