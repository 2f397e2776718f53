from __future__ import annotations

from typing import Optional

import numpy as np

from lithos.data import Sample, resize_bilinear
from lithos.errors import ShapeError, UnsupportedArchitectureError
from lithos.explain.base import SaliencyMap, as_input, normalize
from lithos.tensor import Tensor, no_tape
from lithos.zoo import Model


class AttentionStack:
    """Softmax attention of every layer and head for one image.

    ``matrices`` has shape layers x heads x T x T with T = 1 + grid**2; row
    ``0`` is the class token. The CLS grid of a head is its CLS row without
    the CLS column, reshaped in patch raster order.
    """

    matrices: np.ndarray
    grid: int
    model_id: str
    prediction: Optional[int]

    def __init__(
        self,
        matrices: np.ndarray,
        grid: int,
        model_id: str = "",
        prediction: Optional[int] = None,
    ) -> None:
        matrices = np.asarray(matrices, dtype=np.float64)
        if matrices.ndim != 4 or matrices.shape[2] != matrices.shape[3]:
            raise ShapeError(f"Attention must be layers x heads x T x T, got {matrices.shape}.")
        if matrices.shape[2] != grid * grid + 1:
            raise ShapeError(f"{matrices.shape[2]} tokens do not match a {grid} x {grid} patch grid plus CLS.")
        matrices.setflags(write=False)
        self.matrices = matrices
        self.grid = grid
        self.model_id = model_id
        self.prediction = prediction

    @property
    def layers(self) -> int:
        return self.matrices.shape[0]

    @property
    def heads(self) -> int:
        return self.matrices.shape[1]

    @property
    def tokens(self) -> int:
        return self.matrices.shape[2]

    def max_row_error(self) -> float:
        return float(np.abs(self.matrices.sum(axis=-1) - 1.0).max())

    def cls_grid(self, layer: int, head: Optional[int] = None) -> np.ndarray:
        """CLS-to-patch attention as grid x grid; ``head=None`` averages the heads."""
        rows = self.matrices[layer, :, 0, 1:]
        row = rows.mean(axis=0) if head is None else rows[head]
        return row.reshape(self.grid, self.grid)

    def cls_grids(self) -> np.ndarray:
        return self.matrices[:, :, 0, 1:].reshape(self.layers, self.heads, self.grid, self.grid)

    def entropy(self, layer: int, head: int) -> float:
        """Shannon entropy (nats) of the CLS grid renormalized to a distribution."""
        p = self.cls_grid(layer, head).reshape(-1)
        p = p / p.sum()
        nonzero = p[p > 0]
        return float(-(nonzero * np.log(nonzero)).sum())

    def layer_entropy(self) -> np.ndarray:
        """Mean CLS-grid entropy over heads, one value per layer."""
        return np.array(
            [np.mean([self.entropy(layer, head) for head in range(self.heads)]) for layer in range(self.layers)]
        )

    def rollout(self, residual: float = 0.5) -> np.ndarray:
        """Attention rollout: head-averaged maps mixed with identity, chained over layers.

        Returns the CLS grid of the composed attention.
        """
        joint = np.eye(self.tokens)
        for layer in range(self.layers):
            mixed = residual * np.eye(self.tokens) + (1.0 - residual) * self.matrices[layer].mean(axis=0)
            mixed /= mixed.sum(axis=-1, keepdims=True)
            joint = mixed @ joint
        return joint[0, 1:].reshape(self.grid, self.grid)

    def upsample(self, layer: int, head: Optional[int], size: int) -> np.ndarray:
        return resize_bilinear(self.cls_grid(layer, head), size, size)

    def saliency(self, layer: int = -1, head: Optional[int] = None, size: Optional[int] = None) -> SaliencyMap:
        size = size or self.grid
        layer = layer % self.layers
        return SaliencyMap(
            values=normalize(self.upsample(layer, head, size)),
            method="attention",
            target_class=-1 if self.prediction is None else self.prediction,
            model_id=self.model_id,
            layer=f"blocks.{layer}",
            head=head,
        )


def attention_maps(model: Model, image: np.ndarray | Sample | Tensor) -> AttentionStack:
    """Capture every block's attention during one eval forward pass."""
    if "attention" not in model.probe_points:
        raise UnsupportedArchitectureError(
            f"{type(model).__name__} has no attention layers; use grad_cam() or guided_grad_cam() instead."
        )
    with no_tape():
        output = model.forward(as_input(model, image), mode="eval", capture=["attention"])
    matrices = np.stack([a.numpy()[0] for a in output.captured["attention"]])
    return AttentionStack(
        matrices,
        grid=model.spec.grid,
        model_id=model.model_id,
        prediction=int(output.logits.numpy()[0].argmax()),
    )
