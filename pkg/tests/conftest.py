import numpy as np
import pytest

from boosting import BoostConfig, Dataset
from simulate import DgpSpec, simulate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def s1_small():
    """350 rows of the binary scenario: 100 train, 150 mstop, 100 test."""
    return simulate(DgpSpec("s1-binary-linear", n=350, p=6, seed=3))


@pytest.fixture(scope="session")
def s3_small():
    return simulate(DgpSpec("s3-mixed-linear", n=350, p=6, seed=5))


@pytest.fixture
def s1_dataset(s1_small):
    return Dataset.from_frame(s1_small.frame, [f"x{j}" for j in range(1, 7)])


@pytest.fixture
def quick_config():
    return BoostConfig(s_step=0.1, m_stop=40, stabilization="L2", seed=1)
