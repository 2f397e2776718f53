"""Gradient-based explanations: Grad-CAM, guided backpropagation and their product."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from lithos.data import Sample, resize_bilinear
from lithos.errors import UnsupportedArchitectureError
from lithos.explain.base import Product, SaliencyMap, as_input, check_target, normalize
from lithos.tensor import Tape, Tensor, guided_relu
from lithos.zoo import Model

logger = logging.getLogger(__name__)

Image = np.ndarray | Sample | Tensor


def cam_layer_of(model: Model, layer: Optional[str]) -> str:
    if model.cam_layer is None:
        raise UnsupportedArchitectureError(
            f"Grad-CAM needs convolutional feature maps, which {type(model).__name__} does not have. "
            f"Use attention_maps() (method 'attention') for transformer models."
        )
    return layer if layer is not None else model.cam_layer


def raw_cam(model: Model, batch: Tensor, target_class: int, layer: str) -> np.ndarray:
    """ReLU of the gradient-weighted channel sum, upsampled to the input extent, not normalized."""
    with Tape() as tape:
        output = model.forward(batch, mode="eval", capture=[layer])
        score = output.logits[0, target_class]
    features = output.captured[layer]
    grads = tape.grad_of_output_wrt(features, score).numpy()[0].astype(np.float64)
    activations = features.numpy()[0].astype(np.float64)
    weights = grads.mean(axis=(1, 2))
    coarse = np.maximum(np.tensordot(weights, activations, axes=1), 0.0)
    resolution = model.spec.input_resolution
    return resize_bilinear(coarse, resolution, resolution)


def grad_cam(
    model: Model,
    image: Image,
    target_class: int,
    layer: Optional[str] = None,
) -> SaliencyMap:
    layer = cam_layer_of(model, layer)
    target_class = check_target(model, target_class)
    values = raw_cam(model, as_input(model, image), target_class, layer)
    return SaliencyMap(
        values=normalize(values),
        method="gradcam",
        target_class=target_class,
        model_id=model.model_id,
        layer=layer,
    )


def raw_guided_gradients(model: Model, batch: Tensor, target_class: int) -> np.ndarray:
    """Input gradient under the guided ReLU rule, channel-max over RGB, clipped at zero."""
    leaf = Tensor.wrap(batch.numpy(), requires_grad=True)
    with guided_relu(), Tape() as tape:
        logits = model.forward(leaf, mode="eval").logits
        score = logits[0, target_class]
    grads = tape.backward(score, wrt=[leaf]).of(leaf).numpy()[0].astype(np.float64)
    return np.maximum(grads, 0.0).max(axis=0)


def guided_backprop(model: Model, image: Image, target_class: int) -> SaliencyMap:
    target_class = check_target(model, target_class)
    values = raw_guided_gradients(model, as_input(model, image), target_class)
    return SaliencyMap(
        values=normalize(values),
        method="guided_bp",
        target_class=target_class,
        model_id=model.model_id,
        layer="input",
    )


def guided_grad_cam(
    model: Model,
    image: Image,
    target_class: int,
    layer: Optional[str] = None,
    product: Product = "raw",
) -> SaliencyMap:
    """Grad-CAM times guided backprop, renormalized.

    ``product="raw"`` multiplies the upsampled Grad-CAM values and the guided
    gradients before either is normalized; ``"normalized"`` min-max scales
    each factor first. The raw Grad-CAM is a ReLU output, so in both modes
    the product vanishes wherever Grad-CAM is zero.
    """
    layer = cam_layer_of(model, layer)
    target_class = check_target(model, target_class)
    batch = as_input(model, image)
    cam = raw_cam(model, batch, target_class, layer)
    guided = raw_guided_gradients(model, batch, target_class)
    if product == "normalized":
        cam, guided = normalize(cam), normalize(guided)
    elif product != "raw":
        raise ValueError(f"Unknown Guided Grad-CAM product {product!r}; use 'raw' or 'normalized'.")
    return SaliencyMap(
        values=normalize(cam * guided),
        method="guided_gradcam",
        target_class=target_class,
        model_id=model.model_id,
        layer=layer,
        product=product,
    )
