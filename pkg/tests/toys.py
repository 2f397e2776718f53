"""Toy architectures small enough for exact, fast explanation tests."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from lithos.data import NormalizationStats
from lithos.tensor import Tensor
from lithos.tensor import functional as F
from lithos.zoo import ModelSpec
from lithos.zoo.base import ForwardOutput, Mode, Model, fan_in_normal


class ToyCNN(Model):
    """conv3x3 -> relu -> ``features`` probe -> global average pool -> linear."""

    kind = "toy"
    head_prefix = "fc."
    cam_layer = "features"

    @classmethod
    def build(cls, spec: ModelSpec, seed: int = 0, channels: int = 4) -> ToyCNN:
        rng = np.random.default_rng(seed)
        model = cls(spec)
        model.add_parameter("conv.weight", fan_in_normal(rng, (channels, 3, 3, 3)))
        model.add_parameter("conv.bias", np.zeros(channels))
        model.init_head(spec.num_classes, rng)
        model.normalization = NormalizationStats(mean=(0.5, 0.5, 0.5), std=(0.25, 0.25, 0.25), source="train")
        return model

    def init_head(self, num_classes: int, rng: np.random.Generator) -> None:
        channels = self.parameters["conv.weight"].shape[0]
        self.add_parameter("fc.weight", fan_in_normal(rng, (num_classes, channels), gain=1.0))
        self.add_parameter("fc.bias", np.zeros(num_classes))

    @property
    def probe_points(self) -> tuple[str, ...]:
        return ("features",)

    def forward(
        self,
        batch: Tensor,
        mode: Mode = "eval",
        capture: Optional[Iterable[str]] = None,
    ) -> ForwardOutput:
        self.check_batch(batch)
        probes = self.check_capture(capture)
        captured: dict[str, Tensor] = {}
        x = F.relu(F.conv2d(batch, self.parameters["conv.weight"], self.parameters["conv.bias"], padding=1))
        self.keep(captured, probes, "features", x)
        logits = F.linear(F.global_avg_pool(x), self.parameters["fc.weight"], self.parameters["fc.bias"])
        return ForwardOutput(logits, captured)


def constant_image(size: int, value: int = 128) -> np.ndarray:
    return np.full((size, size, 3), value, dtype=np.uint8)


def spot_image(size: int, row: int, col: int, radius: int = 1) -> np.ndarray:
    """Dark canvas with one bright square centred on ``(row, col)``."""
    image = np.full((size, size, 3), 20, dtype=np.uint8)
    image[max(0, row - radius) : row + radius + 1, max(0, col - radius) : col + radius + 1] = 235
    return image
