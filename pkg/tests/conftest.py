import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def linear_world(n=1000, K=5, seed=0, scale_latent=1.0):
    """Noiseless affine measurements of one uniform latent variable."""
    g = np.random.default_rng(seed)
    y = g.uniform(0, 1, n) * scale_latent
    slopes = g.uniform(0.5, 3.0, K) * g.choice([-1, 1], K)
    shifts = g.normal(0, 5, K)
    return y, y[:, None] * slopes + shifts


def noisy_world(n=800, K=4, seed=0, sd=0.15):
    """Monotone nonlinear measurements with additive noise."""
    g = np.random.default_rng(seed)
    y = g.uniform(0, 1, n)
    cols = []
    for k in range(K):
        z = y + g.normal(0, sd, n)
        cols.append([np.exp(2 * z), z ** 3, -np.tanh(3 * z), 5 * z - 1][k % 4])
    return y, np.column_stack(cols)
