from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from lithos.data import NormalizationStats, Sample, standardize
from lithos.errors import ConfigError, LabelRangeError, NumericError, ShapeError
from lithos.tensor import DTYPE, Tensor
from lithos.zoo import Model

Method = Literal["gradcam", "guided_bp", "guided_gradcam", "attention"]
Product = Literal["raw", "normalized"]


def normalize(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericError("Saliency values contain NaN or infinity; the explained model is unstable.")
    low, high = float(values.min()), float(values.max())
    if high - low <= 0.0:
        return np.zeros_like(values)
    return (values - low) / (high - low)


class SaliencyMap(BaseModel):
    """A normalized H x W explanation plus where it came from."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    values: np.ndarray
    method: Method
    target_class: int
    model_id: str
    layer: Optional[str] = None
    head: Optional[int] = None
    rotation_deg: Optional[float] = None
    normalization: Literal["minmax"] = "minmax"
    product: Optional[Product] = None

    @field_validator("values")
    @classmethod
    def unit_range(cls, value: np.ndarray) -> np.ndarray:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError(f"Saliency maps are H x W, got shape {value.shape}.")
        if not np.all(np.isfinite(value)) or value.min() < 0.0 or value.max() > 1.0:
            raise ValueError("Saliency values must be finite and normalized to [0, 1].")
        value.setflags(write=False)
        return value

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def source(self) -> str:
        return f"{self.model_id}:{self.layer}" if self.layer else self.model_id


def model_stats(model: Model) -> NormalizationStats:
    if model.normalization is None:
        raise ConfigError(
            f"{model!r} carries no normalization statistics; train it or load a checkpoint "
            f"before explaining raw images, or pass a prepared batch tensor."
        )
    return model.normalization


def as_input(model: Model, image: np.ndarray | Sample | Tensor) -> Tensor:
    """Turn a uint8 image (or sample) into a standardized 1 x 3 x R x R batch."""
    if isinstance(image, Tensor):
        if image.ndim != 4 or image.shape[0] != 1:
            raise ShapeError(f"Explanations take a single image; got a batch of shape {image.shape}.")
        return image
    if isinstance(image, Sample):
        image = image.image
    planes = standardize(np.asarray(image), model_stats(model), model.spec.input_resolution)
    return Tensor.wrap(planes[None].astype(DTYPE))


def check_target(model: Model, target_class: int) -> int:
    if not 0 <= target_class < model.spec.num_classes:
        raise LabelRangeError(
            f"target_class {target_class} is outside [0, {model.spec.num_classes}) for {model!r}."
        )
    return int(target_class)
