from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from lithos.errors import SpecError
from lithos.tensor import Tensor
from lithos.tensor import functional as F
from lithos.zoo.base import (
    ForwardOutput,
    Mode,
    Model,
    ModelSpec,
    fan_in_normal,
    register_architecture,
)


@register_architecture("resnet18")
class ResNet18(Model):
    """ResNet-18: 7x7 stem, four stages of two basic blocks, pooled linear head.

    Parameter names follow the torchvision layout (``layer2.0.downsample.0``),
    so externally produced weights import with an identity name map.
    """

    head_prefix = "fc."
    cam_layer = "layer4"

    @classmethod
    def build(cls, spec: ModelSpec, seed: int = 0) -> ResNet18:
        if spec.kind != "resnet18":
            raise SpecError(f"build_resnet18() needs a spec of kind 'resnet18', got '{spec.kind}'.")
        rng = np.random.default_rng(seed)
        model = cls(spec)
        stem = spec.stage_channels[0]
        model.add_parameter("conv1.weight", fan_in_normal(rng, (stem, 3, 7, 7)))
        model.add_batch_norm("bn1", stem)

        in_channels = stem
        for stage, channels in enumerate(spec.stage_channels, start=1):
            for block in range(spec.blocks_per_stage[stage - 1]):
                prefix = f"layer{stage}.{block}"
                stride = 2 if stage > 1 and block == 0 else 1
                model.add_parameter(f"{prefix}.conv1.weight", fan_in_normal(rng, (channels, in_channels, 3, 3)))
                model.add_batch_norm(f"{prefix}.bn1", channels)
                model.add_parameter(f"{prefix}.conv2.weight", fan_in_normal(rng, (channels, channels, 3, 3)))
                model.add_batch_norm(f"{prefix}.bn2", channels)
                if stride != 1 or in_channels != channels:
                    model.add_parameter(
                        f"{prefix}.downsample.0.weight",
                        fan_in_normal(rng, (channels, in_channels, 1, 1)),
                    )
                    model.add_batch_norm(f"{prefix}.downsample.1", channels)
                in_channels = channels

        model.init_head(spec.num_classes, rng)
        return model

    def add_batch_norm(self, name: str, channels: int) -> None:
        self.add_parameter(f"{name}.weight", np.ones(channels))
        self.add_parameter(f"{name}.bias", np.zeros(channels))
        self.add_buffer(f"{name}.running_mean", np.zeros(channels))
        self.add_buffer(f"{name}.running_var", np.ones(channels))

    def init_head(self, num_classes: int, rng: np.random.Generator) -> None:
        features = self.spec.stage_channels[-1]
        self.add_parameter("fc.weight", fan_in_normal(rng, (num_classes, features), gain=1.0))
        self.add_parameter("fc.bias", np.zeros(num_classes))

    @property
    def probe_points(self) -> tuple[str, ...]:
        points = ["stem"]
        for stage in range(1, 5):
            points.extend(f"layer{stage}.{block}" for block in range(self.spec.blocks_per_stage[stage - 1]))
            points.append(f"layer{stage}")
        return tuple(points)

    def weight_layer_count(self) -> int:
        """Convolutions on the main path plus the classifier (projection skips excluded)."""
        main = [n for n in self.parameters if n.endswith("weight") and "conv" in n]
        return len(main) + 1

    # forward

    def batch_norm(self, name: str, x: Tensor, mode: Mode) -> Tensor:
        result = F.batch_norm2d(
            x,
            self.parameters[f"{name}.weight"],
            self.parameters[f"{name}.bias"],
            self.buffers[f"{name}.running_mean"],
            self.buffers[f"{name}.running_var"],
            mode=mode,
        )
        if mode == "train":
            self.add_buffer(f"{name}.running_mean", result.running_mean)
            self.add_buffer(f"{name}.running_var", result.running_var)
        return result.output

    def basic_block(self, prefix: str, x: Tensor, stride: int, mode: Mode) -> Tensor:
        out = F.conv2d(x, self.parameters[f"{prefix}.conv1.weight"], stride=stride, padding=1)
        out = F.relu(self.batch_norm(f"{prefix}.bn1", out, mode))
        out = F.conv2d(out, self.parameters[f"{prefix}.conv2.weight"], stride=1, padding=1)
        out = self.batch_norm(f"{prefix}.bn2", out, mode)
        identity = x
        if f"{prefix}.downsample.0.weight" in self.parameters:
            identity = F.conv2d(x, self.parameters[f"{prefix}.downsample.0.weight"], stride=stride)
            identity = self.batch_norm(f"{prefix}.downsample.1", identity, mode)
        return F.relu(out + identity)

    def forward(
        self,
        batch: Tensor,
        mode: Mode = "eval",
        capture: Optional[Iterable[str]] = None,
    ) -> ForwardOutput:
        self.check_batch(batch)
        probes = self.check_capture(capture)
        bn_mode = self.bn_mode(mode)
        captured: dict[str, Tensor] = {}

        x = F.conv2d(batch, self.parameters["conv1.weight"], stride=2, padding=3)
        x = F.relu(self.batch_norm("bn1", x, bn_mode))
        x = F.max_pool2d(x, 3, stride=2, padding=1)
        self.keep(captured, probes, "stem", x)

        for stage in range(1, 5):
            for block in range(self.spec.blocks_per_stage[stage - 1]):
                stride = 2 if stage > 1 and block == 0 else 1
                name = f"layer{stage}.{block}"
                x = self.basic_block(name, x, stride, bn_mode)
                self.keep(captured, probes, name, x)
            self.keep(captured, probes, f"layer{stage}", x)

        pooled = F.global_avg_pool(x)
        logits = F.linear(pooled, self.parameters["fc.weight"], self.parameters["fc.bias"])
        return ForwardOutput(logits, captured)


def build_resnet18(spec: ModelSpec, seed: int = 0) -> ResNet18:
    return ResNet18.build(spec, seed)
