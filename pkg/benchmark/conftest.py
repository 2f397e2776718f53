from __future__ import annotations

import numpy as np
import pytest

from lithos.data import NormalizationStats
from lithos.zoo import ModelSpec, build_model

SEED = 42


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line(
        "markers",
        "baseline: mark test as baseline/control group (reference loops the fast paths are compared with)",
    )


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def conv_case(rng) -> tuple[np.ndarray, np.ndarray]:
    """A 3x3 convolution over a small batch of 16-channel maps."""
    x = rng.standard_normal((2, 16, 16, 16)).astype(np.float32)
    weight = rng.standard_normal((16, 16, 3, 3)).astype(np.float32)
    return x, weight


@pytest.fixture(scope="session")
def desk_resnet():
    model = build_model(ModelSpec(num_classes=4, input_resolution=64, stage_channels=(8, 16, 32, 64)), seed=0)
    model.normalization = NormalizationStats.imagenet()
    return model


@pytest.fixture(scope="session")
def desk_vit():
    spec = ModelSpec(
        kind="vit", num_classes=4, input_resolution=32, patch_size=8, depth=4, heads=2, hidden_dim=32, mlp_dim=64
    )
    model = build_model(spec, seed=0)
    model.normalization = NormalizationStats.imagenet()
    return model


@pytest.fixture(scope="session")
def desk_images(rng) -> np.ndarray:
    """Eight random uint8 images at 64 x 64."""
    return rng.integers(0, 256, (8, 64, 64, 3), dtype=np.uint8)
