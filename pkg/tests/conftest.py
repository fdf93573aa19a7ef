import numpy as np
import pytest

from bfdarcy.spectral import make_grid


@pytest.fixture(scope="session")
def grid8():
    return make_grid(8, 8)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 16)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
