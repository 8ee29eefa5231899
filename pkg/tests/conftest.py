import numpy as np
import pytest

from nnetm.graph import complete_graph, path_graph
from nnetm.neural import Mlp
from nnetm.protocols import ProtocolConfig
from nnetm.signals import generate_sinusoid_batch


@pytest.fixture
def short_batch():
    """Two-agent batch over one time unit."""
    return generate_sinusoid_batch(3, 2, horizon=1.0, step=1e-3, seed=7)


@pytest.fixture
def k2():
    return path_graph(2)


@pytest.fixture
def k5():
    return complete_graph(5)


@pytest.fixture
def linear():
    return ProtocolConfig()


@pytest.fixture
def random_net():
    return Mlp.initialize((2, 16, 16, 1), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
