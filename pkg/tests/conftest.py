import numpy as np
import pytest

from tslab import case39


@pytest.fixture(scope="session")
def ieee39():
    return case39.load_case("ieee39")


@pytest.fixture(scope="session")
def ieee39_transformers():
    return case39.transformer_branches("ieee39")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
