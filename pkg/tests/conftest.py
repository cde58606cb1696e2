import numpy as np
import pytest

from schottky_lab.action import build_model_action
from schottky_lab.perturb import identity_perturbation


@pytest.fixture(scope="session")
def act():
    return build_model_action()


@pytest.fixture(scope="session")
def idp(act):
    return identity_perturbation(act)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
