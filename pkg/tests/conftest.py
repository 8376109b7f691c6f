import numpy as np
import pytest

from semchan.generator import GeneratorConfig


@pytest.fixture(scope="session")
def cfg():
    return GeneratorConfig().resolved()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
