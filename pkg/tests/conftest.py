"""
Shared pytest fixtures for lift tests.
"""

import numpy as np
import pytest

from lift.featureio import FeatureSequence
from lift.model import LiftConfig, init_params

# Try to import jax, skip the cross-checks if not available
try:
    import jax

    jax.config.update("jax_enable_x64", True)
    HAS_JAX = True
except ImportError:
    HAS_JAX = False


requires_jax = pytest.mark.skipif(not HAS_JAX, reason="JAX not installed")


@pytest.fixture
def rng():
    """Seeded generator so every test sees the same random values."""
    return np.random.default_rng(1234)


@pytest.fixture
def toy_config():
    """Small model used wherever the architecture itself is not under test."""
    return LiftConfig(D=12, d=8, layers=1, heads=2, ffn_mult=2, T=4)


@pytest.fixture
def toy_params(toy_config):
    return init_params(toy_config, seed=0)


@pytest.fixture
def make_sequence(rng):
    """Factory for FeatureSequence values with random frames."""

    def _make(video_id="v0", frames=4, dim=12, verb=None, noun=None, split="train"):
        return FeatureSequence(
            video_id=video_id,
            frames=rng.normal(size=(frames, dim)).astype(np.float32),
            verb=verb,
            noun=noun,
            split=split,
        )

    return _make
