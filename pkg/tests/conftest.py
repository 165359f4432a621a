import numpy as np
import pytest

from deepgmm import GmmParams, SeededRng


def rel_vec_err(actual, expected):
    """Relative error between vectors/matrices: ||a - e|| / max(||a||, ||e||)."""
    a = np.asarray(actual, dtype=np.float64).ravel()
    e = np.asarray(expected, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(e))
    if denom == 0.0:
        return 0.0
    return np.linalg.norm(a - e) / denom


def random_gmm(rng: SeededRng, m, dim, spread=3.0):
    """Moderately scaled random mixture parameters for gradient checks."""
    g = rng.generator
    return GmmParams(
        g.uniform(-1.0, 1.0, size=m),
        g.uniform(-spread, spread, size=(m, dim)),
        g.uniform(-0.5, 0.5, size=(m, dim)),
    )


@pytest.fixture
def rng():
    return SeededRng(1234)
