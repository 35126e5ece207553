import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_symmetric(rng, d, scale=1.0):
    G = rng.standard_normal((d, d)) * scale
    return 0.5 * (G + G.T)


def spiked(rng, d, r, gaps=None):
    """``V diag(gaps) V^T`` with a Haar-random frame."""
    V, _ = np.linalg.qr(rng.standard_normal((d, r)))
    lam = np.asarray(gaps if gaps is not None else np.arange(r, 0, -1), dtype=float)
    return (V * lam) @ V.T, V, lam


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
