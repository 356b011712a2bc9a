import numpy as np
import pytest

from tstbench.core import make_stream


@pytest.fixture
def stream():
    return make_stream(1234, "test")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
