from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Any, Iterable

import numpy as np
from pydantic import TypeAdapter


@lru_cache(maxsize=100)
def get_cached_adapter(type: Any) -> TypeAdapter[Any]:
    """Cached TypeAdapter factory to avoid recreating adapters for the same type."""
    return TypeAdapter(type)


def keyed_rng(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of non-negative ints.

    The same key always yields the same stream regardless of which thread or
    in which order it is requested, e.g. ``keyed_rng(seed, epoch, index)``.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def checksum(arrays: Iterable[np.ndarray]) -> str:
    digest = hashlib.sha256()
    for array in arrays:
        contiguous = np.ascontiguousarray(array)
        digest.update(str(contiguous.dtype).encode())
        digest.update(str(contiguous.shape).encode())
        digest.update(contiguous.tobytes())
    return digest.hexdigest()


def round_half_up(values: np.ndarray) -> np.ndarray:
    """Round to nearest with .5 going up; numpy's ``round`` is banker's rounding."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)
