import numpy as np
import pytest
from hypothesis import settings

from bandmatch.features import SyntheticScene, generate_synthetic

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_scene():
    return generate_synthetic(SyntheticScene(12, 60, 2, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
