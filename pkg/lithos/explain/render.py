"""Turn saliency maps into images and write them with their sidecar notes.

Colormap, for ``v`` in [0, 1] (rounding half up)::

    R = round(255 v)
    G = round(255 (1 - |2v - 1|))
    B = round(255 (1 - v))
"""

from __future__ import annotations

from os import PathLike
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np

from lithos.data import resize_bilinear
from lithos.data.image import to_uint8, write_image
from lithos.explain.base import SaliencyMap
from lithos.utils import round_half_up

RenderMode = Literal["overlay", "masked", "raw"]


def colormap(values: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    channels = (255.0 * v, 255.0 * (1.0 - np.abs(2.0 * v - 1.0)), 255.0 * (1.0 - v))
    return np.stack([round_half_up(c) for c in channels], axis=-1).astype(np.uint8)


def _values_for(image: np.ndarray, saliency: SaliencyMap | np.ndarray) -> np.ndarray:
    values = saliency.values if isinstance(saliency, SaliencyMap) else np.asarray(saliency, dtype=np.float64)
    h, w = image.shape[:2]
    if values.shape != (h, w):
        values = resize_bilinear(values, h, w)
    return values


def render(
    image: np.ndarray,
    saliency: SaliencyMap | np.ndarray,
    mode: RenderMode = "overlay",
    alpha: float = 0.5,
    threshold: float = 0.5,
) -> np.ndarray:
    """Overlay the colormapped map, keep only salient pixels, or show the map alone.

    The map is bilinearly resized to the image if their extents differ.
    """
    image = np.asarray(image, dtype=np.uint8)
    values = _values_for(image, saliency)
    if mode == "overlay":
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}.")
        if alpha == 0.0:
            return image.copy()
        blended = (1.0 - alpha) * image.astype(np.float64) + alpha * colormap(values).astype(np.float64)
        return to_uint8(blended)
    if mode == "masked":
        return np.where((values >= threshold)[..., None], image, 0).astype(np.uint8)
    if mode == "raw":
        return colormap(values)
    raise ValueError(f"Unknown render mode {mode!r}; use overlay, masked or raw.")


def output_name(
    stem: str,
    method: str,
    target_class: int,
    kind: RenderMode,
    layer: Optional[int] = None,
    head: Optional[int] = None,
    rotation: Optional[float] = None,
) -> str:
    name = f"{stem}__{method}__c{target_class}"
    if layer is not None:
        name += f"__L{layer}H{'avg' if head is None else head}"
    if rotation is not None:
        name += f"__rot{int(rotation)}"
    return f"{name}__{kind}.png"


def write_sidecar(path: str | PathLike[str], saliency: SaliencyMap, **parameters: Any) -> Path:
    """Plain ``key=value`` notes recording how a rendered map was produced."""
    path = Path(path)
    entries = {
        "method": saliency.method,
        "normalization": saliency.normalization,
        "target_class": saliency.target_class,
        "model_id": saliency.model_id,
        "layer": saliency.layer,
        "head": saliency.head,
        "rotation_deg": saliency.rotation_deg,
        "product": saliency.product,
        **parameters,
    }
    lines = [f"{key}={'' if value is None else value}" for key, value in sorted(entries.items())]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_rendered(
    directory: str | PathLike[str],
    stem: str,
    image: np.ndarray,
    saliency: SaliencyMap,
    kinds: tuple[RenderMode, ...] = ("overlay", "masked", "raw"),
    alpha: float = 0.5,
    threshold: float = 0.5,
    layer_index: Optional[int] = None,
) -> list[Path]:
    """Write each requested rendering plus one sidecar per map; returns the PNG paths."""
    directory = Path(directory)

    def name_for(kind: RenderMode) -> str:
        return output_name(
            stem,
            saliency.method,
            saliency.target_class,
            kind,
            layer=layer_index,
            head=saliency.head,
            rotation=saliency.rotation_deg,
        )

    paths = [
        write_image(directory / name_for(kind), render(image, saliency, kind, alpha, threshold)) for kind in kinds
    ]
    sidecar = name_for("raw").rsplit("__", 1)[0] + ".txt"
    write_sidecar(directory / sidecar, saliency, alpha=alpha, threshold=threshold)
    return paths
