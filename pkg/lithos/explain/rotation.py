from __future__ import annotations

import itertools
import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from lithos.data import Sample, center_crop, resize_image, rotate
from lithos.data.image import to_uint8
from lithos.errors import ConfigError
from lithos.explain.base import Method, Product, SaliencyMap, normalize
from lithos.explain.dispatch import explain, predicted_class
from lithos.zoo import Model

logger = logging.getLogger(__name__)

# 0, 30, ..., 330
DEFAULT_ANGLES = tuple(range(0, 360, 30))


def top_fraction_mask(values: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """The ``ceil(fraction * N)`` highest pixels; ties resolve in raster order."""
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    k = max(1, int(np.ceil(fraction * flat.size)))
    order = np.argsort(-flat, kind="stable")[:k]
    mask = np.zeros(flat.size, dtype=bool)
    mask[order] = True
    return mask.reshape(np.shape(values))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def rotated_view(image: np.ndarray, degrees: float, resolution: int) -> np.ndarray:
    """Rotate about the center with reflection padding, center-crop square, resize to the model input."""
    rotated = to_uint8(rotate(image, degrees, fill="reflect"))
    side = min(rotated.shape[:2])
    square = center_crop(rotated, side, side)
    return square if side == resolution else resize_image(square, resolution)


class RotationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    angles: list[float]
    maps: list[SaliencyMap]
    predictions: list[int]
    target_class: int
    stability: float
    prediction_invariant: bool
    top_fraction: float = 0.1


def rotation_stability(
    model: Model,
    base_image: np.ndarray | Sample,
    angles: Sequence[float] = DEFAULT_ANGLES,
    method: Method = "gradcam",
    target_class: Optional[int] = None,
    top_fraction: float = 0.1,
    layer: Optional[str | int] = None,
    head: Optional[int] = None,
    product: Product = "raw",
) -> RotationResult:
    """Explain rotated copies of one image and compare the maps in the base frame.

    Each map is rotated back by the negative angle (zeros outside the
    rotated frame) and renormalized. Stability is the mean pairwise IoU of
    the top-fraction masks; a single angle is perfectly stable.
    """
    angles = [float(a) for a in angles]
    if not angles:
        raise ConfigError("rotation_stability() needs at least one angle.")
    if 0.0 not in angles:
        raise ConfigError(f"The angle list must include 0 to anchor the base frame, got {angles}.")
    image = base_image.image if isinstance(base_image, Sample) else np.asarray(base_image)
    resolution = model.spec.input_resolution

    views = [rotated_view(image, angle, resolution) for angle in angles]
    predictions = [predicted_class(model, view) for view in views]
    target = predictions[angles.index(0.0)] if target_class is None else target_class

    maps = []
    for angle, view in zip(angles, views):
        saliency = explain(model, view, method, target_class=target, layer=layer, head=head, product=product)
        back = np.clip(rotate(saliency.values, -angle, fill="zero"), 0.0, None)
        maps.append(SaliencyMap(**{**dict(saliency), "values": normalize(back), "rotation_deg": angle}))

    masks = [top_fraction_mask(m.values, top_fraction) for m in maps]
    pairs = list(itertools.combinations(range(len(masks)), 2))
    stability = float(np.mean([iou(masks[i], masks[j]) for i, j in pairs])) if pairs else 1.0
    logger.debug("Rotation stability %.3f over %d angles (%s)", stability, len(angles), method)
    return RotationResult(
        angles=angles,
        maps=maps,
        predictions=predictions,
        target_class=target,
        stability=stability,
        prediction_invariant=len(set(predictions)) == 1,
        top_fraction=top_fraction,
    )
