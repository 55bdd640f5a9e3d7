import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def small_params():
    from ljreact import ModelParams
    return ModelParams(N=6, T=0.01, dt=1e-3, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
