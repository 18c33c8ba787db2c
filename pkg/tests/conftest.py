import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def dense_tangent_project(Z, Y):
    n = Z.shape[0]
    return (np.eye(n) - Z @ Z.T) @ Y + Z @ (Z.T @ Y - Y.T @ Z) / 2
