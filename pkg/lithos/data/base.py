from __future__ import annotations

from typing import Iterable, Literal, Optional, Self, Sequence

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    field_validator,
    model_validator,
)

from lithos.errors import SplitError

Polarization = Literal["PPL", "XPL"]
Magnification = Literal["2.5x", "10x"]
SplitTag = Literal["train", "test"]

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class NormalizationStats(BaseModel):
    """Per-channel mean/std of [0, 1]-scaled pixels."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    source: Literal["train", "imagenet"] = "train"

    @field_validator("std")
    @classmethod
    def positive_std(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if min(value) <= 0:
            raise ValueError(f"Normalization std must be positive per channel, got {value}.")
        return value

    @classmethod
    def imagenet(cls) -> NormalizationStats:
        return cls(mean=IMAGENET_MEAN, std=IMAGENET_STD, source="imagenet")

    @classmethod
    def from_images(cls, images: Iterable[np.ndarray]) -> NormalizationStats:
        total = np.zeros(3, dtype=np.float64)
        squares = np.zeros(3, dtype=np.float64)
        count = 0
        for image in images:
            pixels = image.reshape(-1, 3).astype(np.float64) / 255.0
            total += pixels.sum(axis=0)
            squares += (pixels * pixels).sum(axis=0)
            count += pixels.shape[0]
        if count == 0:
            raise ValueError("Cannot compute normalization statistics from zero images.")
        mean = total / count
        var = np.maximum(squares / count - mean * mean, 0.0)
        # a flat channel would divide by zero when standardizing
        std = np.where(var > 0, np.sqrt(var), 1.0)
        return cls(mean=tuple(mean.tolist()), std=tuple(std.tolist()))


class Sample(BaseModel):
    """One thin-section image with its label and acquisition metadata.

    ``rotation_index`` is the microscope stage position in whole degrees, the
    number written after ``__rot`` in file stems; ``None`` means the stage was
    not recorded.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    image: np.ndarray
    label: NonNegativeInt
    sample_id: str = Field(min_length=1)
    polarization: Polarization = "PPL"
    magnification: Magnification = "10x"
    rotation_index: Optional[int] = None
    mask: Optional[np.ndarray] = None

    @field_validator("image")
    @classmethod
    def rgb_uint8(cls, value: np.ndarray) -> np.ndarray:
        value = np.asarray(value)
        if value.ndim != 3 or value.shape[2] != 3 or value.dtype != np.uint8:
            raise ValueError(
                f"Sample images must be H x W x 3 uint8, got {value.shape} {value.dtype}."
            )
        if value.flags.writeable:
            value = value.copy()
            value.setflags(write=False)
        return value

    @field_validator("mask")
    @classmethod
    def binary_mask(cls, value: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if value is None:
            return None
        value = np.asarray(value).astype(bool)
        if value.ndim != 2:
            raise ValueError(f"Masks must be H x W, got shape {value.shape}.")
        if not value.any():
            raise ValueError("Masks must mark at least one pixel; use mask=None instead.")
        value.setflags(write=False)
        return value

    @model_validator(mode="after")
    def mask_matches_image(self) -> Self:
        if self.mask is not None and self.mask.shape != self.image.shape[:2]:
            raise ValueError(
                f"Mask shape {self.mask.shape} does not match image shape {self.image.shape[:2]}."
            )
        return self

    @property
    def stem(self) -> str:
        stem = f"{self.sample_id}__{self.polarization.lower()}__{self.magnification}"
        if self.rotation_index is not None:
            stem += f"__rot{self.rotation_index}"
        return stem


class Corpus(BaseModel):
    """Labeled samples, optional train/test tags and train-split statistics."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    samples: list[Sample]
    class_names: list[str] = Field(min_length=1)
    splits: Optional[list[SplitTag]] = None
    normalization: Optional[NormalizationStats] = None
    rejects: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def consistent(self) -> Self:
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError(f"Class names must be unique, got {self.class_names}.")
        k = len(self.class_names)
        for sample in self.samples:
            if sample.label >= k:
                raise ValueError(
                    f"Sample '{sample.sample_id}' has label {sample.label} but the corpus has {k} classes."
                )
        if self.splits is not None and len(self.splits) != len(self.samples):
            raise ValueError(
                f"Got {len(self.splits)} split tags for {len(self.samples)} samples."
            )
        return self

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def has_masks(self) -> bool:
        return any(s.mask is not None for s in self.samples)

    def indices(self, split: Optional[SplitTag] = None) -> list[int]:
        if split is None:
            return list(range(len(self.samples)))
        if self.splits is None:
            raise ValueError(
                f"The corpus has no split assignment; call stratified_split() before asking for '{split}'."
            )
        return [i for i, tag in enumerate(self.splits) if tag == split]

    def class_counts(self, indices: Optional[Sequence[int]] = None) -> list[int]:
        counts = [0] * self.num_classes
        for i in range(len(self.samples)) if indices is None else indices:
            counts[self.samples[i].label] += 1
        return counts

    def with_splits(
        self, splits: Sequence[SplitTag], imagenet_stats: bool = False
    ) -> Corpus:
        """Attach tags and recompute normalization from the train-tagged samples only."""
        tags = list(splits)
        if imagenet_stats:
            stats = NormalizationStats.imagenet()
        else:
            train = [s.image for s, tag in zip(self.samples, tags) if tag == "train"]
            if not train:
                raise SplitError(
                    f"No sample among {len(tags)} is tagged 'train', so there is nothing to compute "
                    f"normalization statistics from. Raise the train fraction or pass imagenet_stats=True."
                )
            stats = NormalizationStats.from_images(train)
        return Corpus(
            samples=self.samples,
            class_names=self.class_names,
            splits=tags,
            normalization=stats,
            rejects=self.rejects,
        )

    def subset(self, indices: Sequence[int]) -> Corpus:
        return Corpus(
            samples=[self.samples[i] for i in indices],
            class_names=self.class_names,
            splits=[self.splits[i] for i in indices] if self.splits is not None else None,
            normalization=self.normalization,
            rejects=self.rejects,
        )
