from lithos.explain.attention import AttentionStack, attention_maps
from lithos.explain.base import Method, Product, SaliencyMap, as_input, normalize
from lithos.explain.dispatch import explain, predicted_class
from lithos.explain.gradients import grad_cam, guided_backprop, guided_grad_cam
from lithos.explain.pointing import corpus_pointing_score, pointing_game, resize_mask
from lithos.explain.render import colormap, output_name, render, write_rendered, write_sidecar
from lithos.explain.rotation import (
    DEFAULT_ANGLES,
    RotationResult,
    iou,
    rotated_view,
    rotation_stability,
    top_fraction_mask,
)

__all__ = [
    "DEFAULT_ANGLES",
    "AttentionStack",
    "Method",
    "Product",
    "RotationResult",
    "SaliencyMap",
    "as_input",
    "attention_maps",
    "colormap",
    "corpus_pointing_score",
    "explain",
    "grad_cam",
    "guided_backprop",
    "guided_grad_cam",
    "iou",
    "normalize",
    "output_name",
    "pointing_game",
    "predicted_class",
    "render",
    "resize_mask",
    "rotated_view",
    "rotation_stability",
    "top_fraction_mask",
    "write_rendered",
    "write_sidecar",
]
