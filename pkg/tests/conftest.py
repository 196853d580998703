"""Root-level pytest fixtures for all tests.

This module provides fixtures that are available to all tests in the project.
"""

import numpy as np
import pytest
from test_helpers import reset_all_globals

from repositories.params_repository import ParamsRepository
from services.ckks_service import CkksService


@pytest.fixture(autouse=True)
def reset_global_state():
    """Automatically reset all global service and repository instances after each test.

    This fixture ensures test isolation by resetting all singleton instances
    to None after each test completes, preventing state leakage between tests.
    """
    yield
    reset_all_globals()


@pytest.fixture(scope="session")
def test_params():
    """Small parameter set: N=2^7, n=2^4, L=5, dnum=3."""
    return ParamsRepository().load_params("test")


@pytest.fixture(scope="session")
def boot_params():
    """Fully packed parameter set (N=2^5, n=2^4) for the bootstrapping roundtrip."""
    return ParamsRepository().load_params("boot")


@pytest.fixture
def ckks(test_params) -> CkksService:
    """Scheme service with a fixed random stream."""
    return CkksService(test_params, rng=np.random.default_rng(7))


@pytest.fixture(scope="session")
def test_keys(test_params):
    """Secret, multiplication and rotation keys shared across the session."""
    service = CkksService(test_params, rng=np.random.default_rng(11))
    return service.keygen(rotations=(1, 2, 3, -1))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
