from __future__ import annotations

from typing import Self, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from lithos.data.base import NormalizationStats, Sample
from lithos.data.image import resize_bilinear, resize_nearest, to_uint8
from lithos.runtime import active_runtime
from lithos.tensor import DTYPE, Tensor
from lithos.utils import keyed_rng, round_half_up

LUMA = np.array([0.299, 0.587, 0.114])


class AugmentPolicy(BaseModel):
    """Training-time augmentation: flips, color jitter, random-area crop.

    The crop is always resized to the model's input resolution, passed to
    :func:`augment` by the caller.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    hflip_p: float = Field(default=0.5, ge=0.0, le=1.0)
    vflip_p: float = Field(default=0.5, ge=0.0, le=1.0)
    jitter: float = Field(default=0.2, ge=0.0, lt=1.0)
    crop_scale: tuple[float, float] = (0.8, 1.0)

    @model_validator(mode="after")
    def crop_range(self) -> Self:
        low, high = self.crop_scale
        if not 0.0 < low <= high <= 1.0:
            raise ValueError(f"crop_scale {self.crop_scale} must satisfy 0 < low <= high <= 1.")
        return self

    @classmethod
    def identity(cls) -> AugmentPolicy:
        return cls(hflip_p=0.0, vflip_p=0.0, jitter=0.0, crop_scale=(1.0, 1.0))


def _jitter(image: np.ndarray, strength: float, rng: np.random.Generator) -> np.ndarray:
    brightness, contrast, saturation = rng.uniform(1.0 - strength, 1.0 + strength, 3)
    if strength == 0.0:
        return image
    image = image * brightness
    mean = float((image @ LUMA).mean())
    image = (image - mean) * contrast + mean
    gray = (image @ LUMA)[..., None]
    image = (image - gray) * saturation + gray
    return np.clip(image, 0.0, 255.0)


def augment(
    sample: Sample,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    resolution: int = 224,
) -> Sample:
    """Apply the policy; the mask follows every geometric step and no photometric one.

    Draws are consumed in a fixed order whatever the probabilities, so a
    stream keyed by ``(seed, epoch, index)`` always maps to the same result.
    """
    image = sample.image.astype(np.float64)
    mask = sample.mask
    hflip, vflip = rng.random(2)
    if hflip < policy.hflip_p:
        image = image[:, ::-1]
        mask = mask[:, ::-1] if mask is not None else None
    if vflip < policy.vflip_p:
        image = image[::-1]
        mask = mask[::-1] if mask is not None else None

    image = _jitter(image, policy.jitter, rng)

    h, w = image.shape[:2]
    side = float(np.sqrt(rng.uniform(*policy.crop_scale)))
    ch = max(1, int(round_half_up(h * side)))
    cw = max(1, int(round_half_up(w * side)))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    image = image[top : top + ch, left : left + cw]

    r = resolution
    image = to_uint8(resize_bilinear(image, r, r))
    if mask is not None:
        mask = resize_nearest(mask[top : top + ch, left : left + cw], r, r)
        if not mask.any():
            mask = None
    return Sample(
        image=image,
        label=sample.label,
        sample_id=sample.sample_id,
        polarization=sample.polarization,
        magnification=sample.magnification,
        rotation_index=sample.rotation_index,
        mask=mask,
    )


def augment_all(
    samples: Sequence[Sample],
    policy: AugmentPolicy,
    seed: int,
    epoch: int,
    indices: Sequence[int],
    resolution: int = 224,
) -> list[Sample]:
    """Augment a batch with per-sample streams keyed by ``(seed, epoch, index)``."""
    runtime = active_runtime.get()
    return runtime.map(
        lambda pair: augment(pair[0], policy, keyed_rng(seed, epoch, pair[1]), resolution),
        list(zip(samples, indices)),
    )


def standardize(image: np.ndarray, stats: NormalizationStats, resolution: int) -> np.ndarray:
    """Resize, scale to [0, 1] and standardize one image; returns C x H x W."""
    values = resize_bilinear(image, resolution, resolution) / 255.0
    values = (values - np.asarray(stats.mean)) / np.asarray(stats.std)
    return values.transpose(2, 0, 1)


def to_batch(
    samples: Sequence[Sample],
    stats: NormalizationStats,
    resolution: int = 224,
) -> Tensor:
    """Stack samples into an ``N x 3 x resolution x resolution`` float32 tensor."""
    if not samples:
        raise ValueError("to_batch() needs at least one sample.")
    runtime = active_runtime.get()
    planes = runtime.map(lambda s: standardize(s.image, stats, resolution), samples)
    return Tensor.wrap(np.stack(planes).astype(DTYPE))
