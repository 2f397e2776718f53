from __future__ import annotations

import numpy as np
import pytest

from lithos.data import Corpus, default_synth_spec, generate_synthetic, stratified_split
from lithos.zoo import ModelSpec, build_model
from tests.toys import ToyCNN

# Root-level conftest.py
# Desk-scale fixtures shared by every sub-package; each is small enough that
# the whole fast suite runs on a laptop CPU.


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run the desk-scale acceptance trainings marked slow",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def tiny_corpus() -> Corpus:
    """Two synthetic fabrics, six sections each, PPL only, 32 x 32."""
    spec = default_synth_spec(
        num_classes=2,
        image_size=32,
        sections_per_class=6,
        seed=3,
        polarizations=["PPL"],
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def split_corpus(tiny_corpus: Corpus) -> Corpus:
    """Half of every class in train, half in test."""
    return stratified_split(tiny_corpus, train_fraction=0.5, seed=0)


@pytest.fixture
def small_resnet_spec() -> ModelSpec:
    return ModelSpec(kind="resnet18", num_classes=2, input_resolution=32, stage_channels=(4, 4, 8, 8))


@pytest.fixture
def small_vit_spec() -> ModelSpec:
    return ModelSpec(
        kind="vit",
        num_classes=2,
        input_resolution=16,
        patch_size=4,
        depth=2,
        heads=2,
        hidden_dim=8,
        mlp_dim=16,
    )


@pytest.fixture
def small_resnet(small_resnet_spec: ModelSpec):
    return build_model(small_resnet_spec, seed=0)


@pytest.fixture
def small_vit(small_vit_spec: ModelSpec):
    return build_model(small_vit_spec, seed=0)


@pytest.fixture
def toy_cnn() -> ToyCNN:
    return ToyCNN.build(ModelSpec(num_classes=3, input_resolution=8), seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
