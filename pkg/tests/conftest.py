import numpy as np
import pytest
from hypothesis import settings

# wavelet/lattice property cases run FFTs; the default deadline is too twitchy
settings.register_profile("package", deadline=None, max_examples=25)
settings.load_profile("package")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
