import numpy as np
import pytest

from saltkit import SyntheticSpec, generate_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_instance():
    """Noiseless planted instance shared by pipeline-level tests."""
    spec = SyntheticSpec(
        vt_size=240, vs_size=300, h_s=20, h_t=16, aux_dim=12,
        overlap_ratio=0.5, noise_std=0.0, seed=99,
    )
    return generate_instance(spec)
