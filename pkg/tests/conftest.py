import numpy as np
import pytest

from scatmoments import ProcessSpec, build_filter_bank, simulate


@pytest.fixture(scope="session")
def bank10():
    """Default certificate bank: scales 1..10 on a 2^14 grid."""
    return build_filter_bank(2**14, 1, 10)


@pytest.fixture(scope="session")
def bank9():
    """Small bank for fast estimator tests."""
    return build_filter_bank(2**13, 1, 9)


@pytest.fixture(scope="session")
def fbm_half_2e18():
    """One fractional Brownian path at the Brownian point, 2^18 samples."""
    return simulate(ProcessSpec("fbm", {"hurst": 0.5}, 2**18, seed=101)).series


@pytest.fixture(scope="session")
def white_noise_2e18():
    rng = np.random.default_rng(7)
    return rng.normal(size=2**18)
