import numpy as np
import pytest

from quasiergodic.models import constant_drift, feller
from quasiergodic.spectral import auto_right_cut, solve_model


@pytest.fixture(scope="session")
def feller_model():
    return feller(1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def brownian():
    return constant_drift(0.0)


@pytest.fixture(scope="session")
def feller_right_cut(feller_model):
    return auto_right_cut(feller_model)


@pytest.fixture(scope="session")
def feller_solution(feller_model, feller_right_cut):
    return solve_model(feller_model, 2000, 64, 1e-4, feller_right_cut)


@pytest.fixture(scope="session")
def ones(feller_solution):
    return np.ones(feller_solution.nodes.size)
