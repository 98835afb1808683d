import numpy as np
import pytest

from quantbench import synth_gaussian


@pytest.fixture
def blobs2():
    return synth_gaussian([150, 150], [[0.0, 0.0], [2.0, 1.0]], 1.0, seed=5, name="blobs2")


@pytest.fixture
def blobs3():
    return synth_gaussian([120, 120, 120], [[0.0, 0.0], [2.5, 0.0], [0.0, 2.5]], 1.0, seed=6, name="blobs3")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
