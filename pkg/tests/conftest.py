import numpy as np
import pytest

from fedwsm import data


@pytest.fixture(scope="session")
def small_dataset():
    """10-class synthetic set, small enough for fast federation tests."""
    return data.make_synthetic(10, 16, 80, 1.0, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
