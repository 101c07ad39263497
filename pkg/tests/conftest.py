import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_simplex(rng, K, n=None):
    """Dirichlet rows bounded away from 0 so logs stay tame."""
    p = rng.dirichlet(np.ones(K), size=None if n is None else n)
    p = np.clip(p, 1e-9, None)
    return p / p.sum(axis=-1, keepdims=True)
