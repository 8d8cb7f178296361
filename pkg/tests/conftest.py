import numpy as np
import pytest

SEED = 20260815


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def rng_factory():
    def make(offset=0):
        return np.random.default_rng(SEED + offset)
    return make
