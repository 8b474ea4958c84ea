import numpy as np
import pytest

from otbench import evaluation, kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the jitted kernels once so timed tests see steady-state speed
    kernels.warmup()


@pytest.fixture(scope="session")
def tiny_gt():
    """Small reference map, enough for recorder/trainer smoke tests."""
    return evaluation.build_ground_truth(B=64, epsilon=0.05, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
