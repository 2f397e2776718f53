from __future__ import annotations

from typing import Optional

import numpy as np

from lithos.data import Sample
from lithos.explain.attention import attention_maps
from lithos.explain.base import Method, Product, SaliencyMap, as_input
from lithos.explain.gradients import grad_cam, guided_backprop, guided_grad_cam
from lithos.tensor import Tensor, no_tape
from lithos.zoo import Model


def predicted_class(model: Model, image: np.ndarray | Sample | Tensor) -> int:
    with no_tape():
        logits = model(as_input(model, image), mode="eval")
    return int(logits.numpy()[0].argmax())


def explain(
    model: Model,
    image: np.ndarray | Sample | Tensor,
    method: Method,
    target_class: Optional[int] = None,
    layer: Optional[str | int] = None,
    head: Optional[int] = None,
    product: Product = "raw",
) -> SaliencyMap:
    """Run one explanation method; ``target_class=None`` explains the predicted class.

    For ``attention``, ``layer`` is a block index (default: last block) and
    ``head=None`` averages the heads; the map is upsampled to the input size.
    ``product`` only applies to ``guided_gradcam``.
    """
    batch = as_input(model, image)
    if method == "attention":
        stack = attention_maps(model, batch)
        return stack.saliency(
            layer=-1 if layer is None else int(layer),
            head=head,
            size=model.spec.input_resolution,
        )
    target = predicted_class(model, batch) if target_class is None else target_class
    if method == "gradcam":
        return grad_cam(model, batch, target, layer=layer)
    if method == "guided_bp":
        return guided_backprop(model, batch, target)
    if method == "guided_gradcam":
        return guided_grad_cam(model, batch, target, layer=layer, product=product)
    raise ValueError(
        f"Unknown explanation method {method!r}; use gradcam, guided_bp, guided_gradcam or attention."
    )
