import numpy as np
import pytest

from fol import _kernels


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    # Compile the numba kernels once so timed tests measure steady state.
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_distribution(rng, shape):
    """Strictly positive mask values summing to 1."""
    values = rng.uniform(0.05, 1.0, size=shape)
    return values / values.sum()


def unit_rows(rng, n, d):
    mat = rng.normal(size=(n, d))
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)
