import numpy as np
import pytest

from lafd.model import init_detector


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def detector_store():
    """One shared random-init model; building 2.6M parameters per test adds up."""
    return init_detector(seed=7)
