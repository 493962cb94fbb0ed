import numpy as np
import pytest

from mtsfm.ndiff import set_default_dtype


@pytest.fixture(autouse=True)
def _float64():
    # verification profile: every test runs at 64-bit unless it opts out
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
