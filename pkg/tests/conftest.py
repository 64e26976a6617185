import numpy as np
import pytest

from mpcnkit.rng import RngStream

SEED = 20240611


@pytest.fixture
def stream():
    """Factory for fixed-seed streams; each test asks for its own ids."""

    def make(stream_id=0, seed=SEED):
        return RngStream(seed, stream_id)

    return make


def within_se(values, target, k=4.0):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / np.sqrt(v.shape[0])
    return abs(v.mean() - target) <= k * se
