import numpy as np
import pytest

from lpdens.analysis import mixture_density, normal_density


@pytest.fixture(scope="session")
def normal200():
    rng = np.random.default_rng(42)
    return normal_density(0.0, 1.0).sample(rng, 200)


@pytest.fixture(scope="session")
def normal500():
    rng = np.random.default_rng(2024)
    return normal_density(0.0, 1.0).sample(rng, 500)


@pytest.fixture(scope="session")
def mix_density():
    return mixture_density([0.5, 0.5], [0.0, 3.0], [1.0, 1.0])
