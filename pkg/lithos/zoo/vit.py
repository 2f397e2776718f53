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
    register_architecture,
    trunc_normal,
)


@register_architecture("vit")
class ViT(Model):
    """Pre-norm vision transformer with class-token readout (DeiT-Small geometry).

    Names follow the timm layout (``blocks.3.attn.qkv.weight``). The
    ``attention`` probe returns one N x heads x T x T softmax tensor per block.
    """

    head_prefix = "head."

    @classmethod
    def build(cls, spec: ModelSpec, seed: int = 0) -> ViT:
        if spec.kind != "vit":
            raise SpecError(f"build_vit() needs a spec of kind 'vit', got '{spec.kind}'.")
        rng = np.random.default_rng(seed)
        model = cls(spec)
        d, m, p = spec.hidden_dim, spec.mlp_dim, spec.patch_size

        model.add_parameter("cls_token", trunc_normal(rng, (1, 1, d)))
        model.add_parameter("pos_embed", trunc_normal(rng, (1, spec.tokens, d)))
        model.add_parameter("patch_embed.proj.weight", trunc_normal(rng, (d, 3, p, p)))
        model.add_parameter("patch_embed.proj.bias", np.zeros(d))
        for i in range(spec.depth):
            prefix = f"blocks.{i}"
            model.add_layer_norm(f"{prefix}.norm1", d)
            model.add_linear(rng, f"{prefix}.attn.qkv", d, 3 * d)
            model.add_linear(rng, f"{prefix}.attn.proj", d, d)
            model.add_layer_norm(f"{prefix}.norm2", d)
            model.add_linear(rng, f"{prefix}.mlp.fc1", d, m)
            model.add_linear(rng, f"{prefix}.mlp.fc2", m, d)
        model.add_layer_norm("norm", d)
        model.init_head(spec.num_classes, rng)
        return model

    def add_linear(self, rng: np.random.Generator, name: str, fan_in: int, fan_out: int) -> None:
        self.add_parameter(f"{name}.weight", trunc_normal(rng, (fan_out, fan_in)))
        self.add_parameter(f"{name}.bias", np.zeros(fan_out))

    def add_layer_norm(self, name: str, dim: int) -> None:
        self.add_parameter(f"{name}.weight", np.ones(dim))
        self.add_parameter(f"{name}.bias", np.zeros(dim))

    def init_head(self, num_classes: int, rng: np.random.Generator) -> None:
        self.add_linear(rng, "head", self.spec.hidden_dim, num_classes)

    @property
    def probe_points(self) -> tuple[str, ...]:
        return ("patch_embed", "attention", *(f"blocks.{i}" for i in range(self.spec.depth)))

    # forward

    def linear(self, name: str, x: Tensor) -> Tensor:
        return F.linear(x, self.parameters[f"{name}.weight"], self.parameters[f"{name}.bias"])

    def layer_norm(self, name: str, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.parameters[f"{name}.weight"], self.parameters[f"{name}.bias"], eps=1e-6)

    def self_attention(self, prefix: str, x: Tensor) -> tuple[Tensor, Tensor]:
        n, tokens, dim = x.shape
        heads = self.spec.heads
        head_dim = dim // heads
        qkv = self.linear(f"{prefix}.qkv", x)
        qkv = qkv.reshape(n, tokens, 3, heads, head_dim).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = F.matmul(q, k.transpose(0, 1, 3, 2)) * (head_dim**-0.5)
        attention = F.softmax(scores, axis=-1)
        out = F.matmul(attention, v).transpose(0, 2, 1, 3).reshape(n, tokens, dim)
        return self.linear(f"{prefix}.proj", out), attention

    def forward(
        self,
        batch: Tensor,
        mode: Mode = "eval",
        capture: Optional[Iterable[str]] = None,
    ) -> ForwardOutput:
        self.check_batch(batch)
        probes = self.check_capture(capture)
        captured: dict[str, object] = {}
        n = batch.shape[0]
        dim, tokens = self.spec.hidden_dim, self.spec.tokens

        x = F.conv2d(
            batch,
            self.parameters["patch_embed.proj.weight"],
            self.parameters["patch_embed.proj.bias"],
            stride=self.spec.patch_size,
        )
        x = x.reshape(n, dim, tokens - 1).transpose(0, 2, 1)
        self.keep(captured, probes, "patch_embed", x)
        cls_tokens = F.broadcast_to(self.parameters["cls_token"], (n, 1, dim))
        x = F.concat([cls_tokens, x], axis=1) + self.parameters["pos_embed"]

        maps: list[Tensor] = []
        for i in range(self.spec.depth):
            prefix = f"blocks.{i}"
            attended, attention = self.self_attention(f"{prefix}.attn", self.layer_norm(f"{prefix}.norm1", x))
            maps.append(attention)
            x = x + attended
            hidden = F.gelu(self.linear(f"{prefix}.mlp.fc1", self.layer_norm(f"{prefix}.norm2", x)))
            x = x + self.linear(f"{prefix}.mlp.fc2", hidden)
            self.keep(captured, probes, prefix, x)

        if "attention" in probes:
            captured["attention"] = maps
        x = self.layer_norm("norm", x)
        logits = self.linear("head", x[:, 0])
        return ForwardOutput(logits, captured)


def build_vit(spec: ModelSpec, seed: int = 0) -> ViT:
    return ViT.build(spec, seed)
