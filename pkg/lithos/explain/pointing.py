from __future__ import annotations

from typing import Sequence

import numpy as np

from lithos.data import resize_nearest
from lithos.explain.base import SaliencyMap


def resize_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == (height, width):
        return mask
    return resize_nearest(mask, height, width)


def pointing_game(saliency: SaliencyMap | np.ndarray, mask: np.ndarray) -> bool:
    """Hit when the first maximum of the map, in raster order, falls inside the mask.

    A uniform map therefore points at pixel (0, 0). Masks of another extent
    are resized to the map with nearest-neighbour sampling.
    """
    values = saliency.values if isinstance(saliency, SaliencyMap) else np.asarray(saliency)
    mask = resize_mask(mask, *values.shape)
    return bool(mask.reshape(-1)[int(np.argmax(values))])


def corpus_pointing_score(
    maps: Sequence[SaliencyMap | np.ndarray],
    masks: Sequence[np.ndarray],
) -> float:
    if len(maps) != len(masks):
        raise ValueError(f"Got {len(maps)} maps for {len(masks)} masks.")
    if not maps:
        raise ValueError("corpus_pointing_score() needs at least one map.")
    hits = sum(pointing_game(m, mask) for m, mask in zip(maps, masks))
    return hits / len(maps)
