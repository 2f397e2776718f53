from __future__ import annotations

import logging
from typing import Annotated, Iterator, Literal, Optional, Self

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from lithos.data.base import Corpus, Magnification, Polarization, Sample
from lithos.data.image import resize_bilinear, rotate, to_uint8
from lithos.errors import GenerationError
from lithos.utils import keyed_rng

logger = logging.getLogger(__name__)

ShapeFamily = Literal["rhomb", "angular", "rounded", "elongated-shell", "vesicular"]
Channel = Annotated[int, Field(ge=0, le=255)]
RGB = tuple[Channel, Channel, Channel]
StageAngle = Annotated[int, Field(ge=0, lt=360)]

# at 2.5x a field of view holds a 4x wider patch of the section
MAGNIFICATION_SCALE: dict[str, float] = {"10x": 1.0, "2.5x": 0.25}


class InclusionRecipe(BaseModel):
    """Population of class-defining inclusions for one synthetic fabric.

    ``size`` bounds the characteristic radius in pixels at 10x for the
    configured image size; ``density`` bounds the inclusion count per image.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(min_length=1)
    family: ShapeFamily
    color_low: RGB
    color_high: RGB
    birefringence: list[RGB] = Field(min_length=1)
    density: tuple[PositiveInt, PositiveInt]
    size: tuple[float, float]

    @model_validator(mode="after")
    def ordered_ranges(self) -> Self:
        if any(lo > hi for lo, hi in zip(self.color_low, self.color_high)):
            raise ValueError(f"Recipe '{self.name}': color_low {self.color_low} exceeds color_high {self.color_high}.")
        if self.density[0] > self.density[1]:
            raise ValueError(f"Recipe '{self.name}': density range {self.density} is reversed.")
        if not 0 < self.size[0] <= self.size[1]:
            raise ValueError(f"Recipe '{self.name}': size range {self.size} must satisfy 0 < low <= high.")
        return self

    def signature(self) -> dict:
        return self.model_dump(exclude={"name"})


class MatrixParams(BaseModel):
    """Groundmass colors and noise shared by all classes."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    ppl_color: RGB = (150, 124, 96)
    xpl_color: RGB = (46, 38, 34)
    noise_amplitude: float = Field(default=18.0, ge=0)
    noise_cells: PositiveInt = 6
    grain: float = Field(default=4.0, ge=0)


class SynthSpec(BaseModel):
    """Recipes plus the acquisition grid rendered for every section.

    ``stage_angles`` lists microscope stage positions in degrees; each one
    re-images the same section rotated about the canvas center and is
    recorded as the sample's ``rotation_index``. ``None`` renders a single
    unrecorded position.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    recipes: list[InclusionRecipe] = Field(min_length=2)
    matrix: MatrixParams = MatrixParams()
    image_size: PositiveInt = 224
    sections_per_class: PositiveInt = 10
    polarizations: list[Polarization] = Field(default=["PPL", "XPL"], min_length=1)
    magnifications: list[Magnification] = Field(default=["10x"], min_length=1)
    stage_angles: Optional[list[StageAngle]] = Field(default=None, min_length=1)
    seed: int = Field(default=0, ge=0)
    max_attempts: PositiveInt = 200

    @model_validator(mode="after")
    def distinct_and_fitting(self) -> Self:
        names = [r.name for r in self.recipes]
        if len(set(names)) != len(names):
            raise ValueError(f"Recipe names must be unique, got {names}.")
        signatures = [r.signature() for r in self.recipes]
        for i, first in enumerate(signatures):
            for j in range(i + 1, len(signatures)):
                if first == signatures[j]:
                    raise ValueError(
                        f"Recipes '{names[i]}' and '{names[j]}' are identical apart from their name; "
                        f"classes must differ in at least one field."
                    )
        canvas = float(self.image_size) ** 2
        for recipe in self.recipes:
            # the largest population must not cover more than the canvas
            budget = recipe.density[1] * np.pi * recipe.size[1] ** 2
            if budget > canvas:
                raise ValueError(
                    f"Recipe '{recipe.name}' can cover {budget:.0f} px of a {canvas:.0f} px canvas; "
                    f"lower density or size."
                )
        if len(set(self.polarizations)) != len(self.polarizations):
            raise ValueError(f"Duplicate polarizations {self.polarizations}.")
        if len(set(self.magnifications)) != len(self.magnifications):
            raise ValueError(f"Duplicate magnifications {self.magnifications}.")
        if self.stage_angles is not None and len(set(self.stage_angles)) != len(self.stage_angles):
            raise ValueError(f"Duplicate stage angles {self.stage_angles}.")
        return self

    @property
    def class_names(self) -> list[str]:
        return [r.name for r in self.recipes]


# shape families (vertices around the origin, radius ~ r)


def _rotated(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(angle), np.sin(angle)
    return points @ np.array([[c, s], [-s, c]])


def _ellipse(a: float, b: float, n: int = 32) -> np.ndarray:
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([a * np.cos(t), b * np.sin(t)], axis=1)


def _outline(family: ShapeFamily, r: float, rng: np.random.Generator) -> np.ndarray:
    if family == "rhomb":
        short = r * rng.uniform(0.45, 0.7)
        points = np.array([[r, 0.0], [0.0, short], [-r, 0.0], [0.0, -short]])
    elif family == "angular":
        k = int(rng.integers(5, 8))
        angles = np.sort(rng.uniform(0, 2 * np.pi, k))
        radii = r * rng.uniform(0.55, 1.0, k)
        points = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    elif family == "rounded":
        points = _ellipse(r, r * rng.uniform(0.7, 1.0))
    elif family == "elongated-shell":
        points = _ellipse(r, r * rng.uniform(0.15, 0.25))
        bend = rng.uniform(-0.3, 0.3)
        points[:, 1] += bend * points[:, 0] ** 2 / r
    else:  # vesicular
        points = _ellipse(r, r * rng.uniform(0.85, 1.0))
    return _rotated(points, rng)


def _polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


class _Inclusion:
    __slots__ = ("points", "center", "extent")

    def __init__(self, points: np.ndarray, center: np.ndarray, extent: float) -> None:
        self.points = points
        self.center = center
        self.extent = extent


def _place(
    recipe: InclusionRecipe,
    spec: SynthSpec,
    scale: float,
    rng: np.random.Generator,
) -> list[_Inclusion]:
    """Rejection-sample non-overlapping inclusions inside the canvas.

    With stage positions every inclusion must also fit the inscribed disc so
    that no rotation of the section pushes it off the canvas.
    """
    size = spec.image_size
    middle = (size - 1) / 2.0
    inscribed = spec.stage_angles is not None
    count = int(rng.integers(recipe.density[0], recipe.density[1] + 1))
    placed: list[_Inclusion] = []
    for _ in range(count):
        for _attempt in range(spec.max_attempts):
            r = max(rng.uniform(*recipe.size) * scale, 1.0)
            outline = _outline(recipe.family, r, rng)
            extent = float(np.linalg.norm(outline, axis=1).max())
            low, high = extent + 1.0, size - extent - 2.0
            if high <= low:
                continue
            center = rng.uniform(low, high, 2)
            if inscribed and np.linalg.norm(center - middle) + extent > middle - 1.0:
                continue
            if all(np.linalg.norm(center - o.center) > extent + o.extent + 1.0 for o in placed):
                placed.append(_Inclusion(outline + center, center, extent))
                break
        else:
            raise GenerationError(
                f"Could not place inclusion {len(placed) + 1} of {count} for class '{recipe.name}' "
                f"after {spec.max_attempts} attempts; the recipe is too crowded for a "
                f"{size} px canvas."
            )
    return placed


def _rasterize(inclusions: list[_Inclusion], size: int, degrees: float = 0.0) -> list[np.ndarray]:
    """One boolean mask per inclusion, rotated counter-clockwise like ``rotate``."""
    middle = (size - 1) / 2.0
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    turn = np.array([[c, -s], [s, c]])
    masks = []
    for inclusion in inclusions:
        points = (inclusion.points - middle) @ turn + middle if degrees else inclusion.points
        canvas = Image.new("L", (size, size), 0)
        ImageDraw.Draw(canvas).polygon([tuple(p) for p in points.tolist()], fill=1)
        masks.append(np.asarray(canvas, dtype=bool))
    return masks


def _matrix(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    params, size = spec.matrix, spec.image_size
    cells = rng.standard_normal((params.noise_cells, params.noise_cells, 3)) * params.noise_amplitude
    low_frequency = resize_bilinear(cells, size, size)
    grain = rng.standard_normal((size, size, 3)) * params.grain
    return low_frequency, grain


def _render_section(
    label: int, section: int, spec: SynthSpec
) -> Iterator[Sample]:
    recipe = spec.recipes[label]
    sample_id = f"{recipe.name}-{section:04d}"
    stages: list[Optional[int]] = list(spec.stage_angles) if spec.stage_angles is not None else [None]
    for m, magnification in enumerate(spec.magnifications):
        rng = keyed_rng(spec.seed, label, section, m)
        inclusions = _place(recipe, spec, MAGNIFICATION_SCALE[magnification], rng)
        low_frequency, grain = _matrix(spec, rng)
        ppl_colors = [
            rng.uniform(np.asarray(recipe.color_low, dtype=np.float64), np.asarray(recipe.color_high, dtype=np.float64))
            for _ in inclusions
        ]
        xpl_colors = [
            np.asarray(recipe.birefringence[int(rng.integers(len(recipe.birefringence)))], dtype=np.float64)
            for _ in inclusions
        ]

        for k, angle in enumerate(stages):
            degrees = float(angle or 0)
            shapes = _rasterize(inclusions, spec.image_size, degrees)
            mask = np.logical_or.reduce(shapes)
            if not mask.any():
                raise GenerationError(
                    f"Inclusions for class '{recipe.name}' rasterize to no pixels at {magnification}; "
                    f"increase the recipe size or the image size."
                )
            texture = rotate(low_frequency, degrees) if degrees else low_frequency
            # sensor noise is new for every exposure
            noise = grain
            if k > 0:
                noise = keyed_rng(spec.seed, label, section, m, k).standard_normal(grain.shape) * spec.matrix.grain
            palettes = {
                "PPL": (spec.matrix.ppl_color, texture, ppl_colors),
                "XPL": (spec.matrix.xpl_color, 0.5 * texture, xpl_colors),
            }
            for polarization in spec.polarizations:
                base, field, colors = palettes[polarization]
                image = np.asarray(base, dtype=np.float64) + field
                for shape, color in zip(shapes, colors):
                    image[shape] = color
                yield Sample(
                    image=to_uint8(image + noise),
                    label=label,
                    sample_id=sample_id,
                    polarization=polarization,
                    magnification=magnification,
                    rotation_index=angle,
                    mask=mask,
                )


def generate_synthetic(spec: SynthSpec) -> Corpus:
    """Render a labeled corpus with pixel-exact inclusion masks.

    Every section draws its geometry from a stream keyed by
    ``(seed, class, section, magnification)``; polarization variants share
    that geometry and mask and differ only in palette. Stage positions turn
    the same geometry, colors and matrix about the center, so a section with
    two polarizations, two magnifications and two stage angles yields eight
    views.
    """
    samples: list[Sample] = []
    for label in range(len(spec.recipes)):
        for section in range(spec.sections_per_class):
            samples.extend(_render_section(label, section, spec))
    logger.info(
        "Generated %d synthetic images for %d classes (seed %d)",
        len(samples),
        len(spec.recipes),
        spec.seed,
    )
    return Corpus(samples=samples, class_names=spec.class_names)


def expected_coverage(
    recipe: InclusionRecipe,
    image_size: int,
    magnification: Magnification = "10x",
    trials: int = 4000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo mean and standard deviation of the masked pixel fraction.

    Uses polygon areas, so it ignores overlap rejection and rasterization
    of boundary pixels.
    """
    rng = np.random.default_rng(seed)
    scale = MAGNIFICATION_SCALE[magnification]
    fractions = np.empty(trials)
    for t in range(trials):
        count = int(rng.integers(recipe.density[0], recipe.density[1] + 1))
        area = 0.0
        for _ in range(count):
            r = max(rng.uniform(*recipe.size) * scale, 1.0)
            area += _polygon_area(_outline(recipe.family, r, rng))
        fractions[t] = area / image_size**2
    return float(fractions.mean()), float(fractions.std())


# reference fabrics: (name, family, ppl low, ppl high, birefringence palette)
_FABRICS: list[tuple[str, ShapeFamily, RGB, RGB, list[RGB]]] = [
    ("calcite", "rhomb", (205, 195, 170), (230, 220, 200), [(236, 206, 214), (206, 232, 222)]),
    ("basalt", "angular", (40, 40, 46), (72, 70, 74), [(30, 30, 34), (64, 60, 58)]),
    ("quartz", "rounded", (220, 218, 210), (245, 244, 238), [(20, 20, 22), (230, 230, 228), (120, 120, 124)]),
    ("shell", "elongated-shell", (196, 180, 150), (222, 208, 178), [(250, 214, 150), (214, 176, 236)]),
    ("void", "vesicular", (238, 238, 236), (252, 252, 250), [(8, 8, 10)]),
    ("feldspar", "angular", (190, 182, 176), (214, 206, 198), [(140, 140, 150), (196, 196, 204)]),
    ("grog", "rounded", (150, 70, 44), (186, 96, 64), [(110, 46, 30)]),
    ("dolomite", "rhomb", (180, 176, 168), (206, 202, 192), [(240, 220, 180), (190, 224, 240)]),
    ("pyroxene", "angular", (84, 120, 76), (116, 150, 100), [(54, 120, 220), (230, 120, 60)]),
    ("organic", "vesicular", (226, 222, 214), (244, 240, 232), [(12, 12, 14)]),
]


def default_synth_spec(
    num_classes: int = 10,
    image_size: int = 224,
    sections_per_class: int = 10,
    seed: int = 0,
    density: tuple[int, int] = (3, 8),
    size_fraction: tuple[float, float] = (0.035, 0.07),
    **overrides,
) -> SynthSpec:
    """Distinct recipes cycling through the shape families, sized to the canvas.

    ``size_fraction`` bounds the inclusion radius as a fraction of
    ``image_size``; fabrics after the fifth are drawn 15% coarser.
    """
    if not 2 <= num_classes <= len(_FABRICS):
        raise ValueError(f"num_classes must be in [2, {len(_FABRICS)}], got {num_classes}.")
    low_fraction, high_fraction = size_fraction
    recipes = []
    for i, (name, family, low, high, palette) in enumerate(_FABRICS[:num_classes]):
        grade = 1.0 + 0.15 * (i // 5)
        recipes.append(
            InclusionRecipe(
                name=name,
                family=family,
                color_low=low,
                color_high=high,
                birefringence=palette,
                density=density,
                size=(low_fraction * image_size * grade, high_fraction * image_size * grade),
            )
        )
    return SynthSpec(
        recipes=recipes,
        image_size=image_size,
        sections_per_class=sections_per_class,
        seed=seed,
        **overrides,
    )
