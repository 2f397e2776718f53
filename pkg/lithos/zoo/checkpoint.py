"""Bit-exact checkpoint and named-tensor files.

Checkpoint layout (all integers little-endian)::

    b"FLCK"                     magic
    u32                         format version (1)
    u32 + UTF-8                 header: JSON text (spec, policy, trainable mask,
                                buffer names, class names, normalization stats)
    u32                         tensor count
    per tensor:
      u32 + UTF-8               name
      u32                       ndim
      u64 * ndim                dims
      u8                        dtype code (0 = float32)
      raw bytes                 elements, row-major, little-endian

A named-tensor file is the same per-tensor section (count included) without
magic, version or header. Decoding the float32 ``2 x 2`` tensor ``[[1, 2], [3, 4]]``
named ``w`` by hand: ``01000000 77 02000000 0200000000000000 0200000000000000
00 0000803f 00000040 00004040 00008040``.
"""

from __future__ import annotations

import json
import logging
import struct
from os import PathLike
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from lithos.data.base import NormalizationStats
from lithos.errors import FormatError, ImportMismatchError
from lithos.tensor import DTYPE
from lithos.zoo.base import Model, ModelSpec, build_model

logger = logging.getLogger(__name__)

MAGIC = b"FLCK"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4")}


def _encode_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    array = np.ascontiguousarray(array, dtype="<f4")
    parts = [
        struct.pack("<I", len(encoded)),
        encoded,
        struct.pack("<I", array.ndim),
        struct.pack(f"<{array.ndim}Q", *array.shape),
        struct.pack("<B", 0),
        array.tobytes(order="C"),
    ]
    return b"".join(parts)


def encode_tensors(tensors: Iterable[tuple[str, np.ndarray]]) -> bytes:
    items = list(tensors)
    return struct.pack("<I", len(items)) + b"".join(_encode_tensor(n, a) for n, a in items)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if size < 0 or end > len(self.payload):
            raise FormatError(
                f"Truncated file while reading {what}: needed {size} bytes, "
                f"{len(self.payload) - self.offset} left",
                self.offset,
            )
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def text(self, what: str) -> str:
        length = self.u32(f"{what} length")
        start = self.offset
        try:
            return self.take(length, what).decode("utf-8")
        except UnicodeDecodeError as error:
            raise FormatError(f"{what} is not valid UTF-8", start) from error

    def tensor(self) -> tuple[str, np.ndarray]:
        name = self.text("tensor name")
        ndim = self.u32(f"ndim of '{name}'")
        if ndim > 8:
            raise FormatError(f"Tensor '{name}' claims {ndim} dimensions", self.offset - 4)
        dims = struct.unpack(f"<{ndim}Q", self.take(8 * ndim, f"dims of '{name}'"))
        code_offset = self.offset
        code = self.take(1, f"dtype of '{name}'")[0]
        if code not in DTYPE_CODES:
            raise FormatError(f"Tensor '{name}' has unknown dtype code {code}", code_offset)
        dtype = DTYPE_CODES[code]
        count = int(np.prod(dims)) if dims else 1
        raw = self.take(count * dtype.itemsize, f"elements of '{name}'")
        array = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(DTYPE)
        return name, array

    def tensors(self) -> dict[str, np.ndarray]:
        count = self.u32("tensor count")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            start = self.offset
            name, array = self.tensor()
            if name in out:
                raise FormatError(f"Tensor '{name}' appears twice", start)
            out[name] = array
        if self.offset != len(self.payload):
            raise FormatError(
                f"{len(self.payload) - self.offset} trailing bytes after the last tensor",
                self.offset,
            )
        return out


def _header(model: Model) -> dict[str, Any]:
    return {
        "spec": model.spec.model_dump(mode="json"),
        "policy": model.policy,
        "trainable": model.trainable,
        "buffers": list(model.buffers),
        "class_names": model.class_names,
        "normalization": (
            model.normalization.model_dump(mode="json") if model.normalization else None
        ),
    }


def encode_checkpoint(model: Model) -> bytes:
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = [(name, t.data) for name, t in model.parameters.items()]
    tensors += list(model.buffers.items())
    return (
        MAGIC
        + struct.pack("<I", VERSION)
        + struct.pack("<I", len(header))
        + header
        + encode_tensors(tensors)
    )


def save_checkpoint(model: Model, path: str | PathLike[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(model)
    path.write_bytes(payload)
    logger.debug("Wrote checkpoint %s (%d bytes)", path, len(payload))
    return path


def _read_checkpoint(payload: bytes) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    reader = _Reader(payload)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", 0)
    version_offset = reader.offset
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError(f"Unsupported checkpoint version {version}", version_offset)
    header_offset = reader.offset
    try:
        header = json.loads(reader.text("header"))
    except json.JSONDecodeError as error:
        raise FormatError(f"Header is not valid JSON: {error.msg}", header_offset) from error
    return header, reader.tensors()


def load_checkpoint(path: str | PathLike[str]) -> Model:
    header, tensors = _read_checkpoint(Path(path).read_bytes())
    spec = ModelSpec.model_validate(header["spec"])
    model = build_model(spec)
    buffer_names = set(header["buffers"])
    expected = set(model.parameters) | set(model.buffers)
    missing = sorted(expected - set(tensors))
    if missing:
        raise ImportMismatchError("Checkpoint lacks tensors required by its own spec", missing)

    parameters = {}
    for name, array in tensors.items():
        if name in buffer_names:
            model.add_buffer(name, array)
        else:
            parameters[name] = array
    # rebuild in file order so save -> load -> save is byte-identical
    model.parameters = {}
    model.trainable = {}
    for name, array in parameters.items():
        model.add_parameter(name, array)
    model.buffers = {name: model.buffers[name] for name in tensors if name in buffer_names}
    model.set_trainable(header["policy"])
    for name, flag in header["trainable"].items():
        model.trainable[name] = bool(flag)
        model.parameters[name].requires_grad = bool(flag)
    model.class_names = header["class_names"]
    if header["normalization"] is not None:
        model.normalization = NormalizationStats.model_validate(header["normalization"])
    return model


def save_named_tensors(path: str | PathLike[str], tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors((name, np.asarray(a)) for name, a in tensors.items()))
    return path


def read_named_tensors(path: str | PathLike[str]) -> dict[str, np.ndarray]:
    """Read either a bare named-tensor file or the tensor section of a checkpoint."""
    payload = Path(path).read_bytes()
    if payload[:4] == MAGIC:
        return _read_checkpoint(payload)[1]
    return _Reader(payload).tensors()


def import_named_tensors(
    path: str | PathLike[str],
    model: Model,
    name_map: Optional[Mapping[str, str]] = None,
    exclude: Iterable[str] = (),
) -> Model:
    """Overwrite model tensors with externally produced weights.

    ``name_map`` renames source tensors to model names (unlisted names pass
    through). Every model parameter and buffer whose name does not start with
    one of the ``exclude`` prefixes is required.
    """
    source = read_named_tensors(path)
    renamed = {(name_map or {}).get(name, name): array for name, array in source.items()}
    excluded = tuple(exclude)

    required = [
        name
        for name in [*model.parameters, *model.buffers]
        if not (excluded and name.startswith(excluded))
    ]
    missing = [name for name in required if name not in renamed]
    if missing:
        raise ImportMismatchError(f"{path} is missing required tensors", missing)

    mismatched = []
    for name in required:
        target = model.parameters[name].shape if name in model.parameters else model.buffers[name].shape
        if renamed[name].shape != target:
            mismatched.append(f"{name} {renamed[name].shape} != {target}")
    if mismatched:
        raise ImportMismatchError(f"{path} has tensors with the wrong shape", mismatched)

    for name in required:
        if name in model.parameters:
            model.assign(name, renamed[name])
        else:
            model.add_buffer(name, renamed[name])
    unused = sorted(set(renamed) - set(required))
    if unused:
        logger.info("Ignored %d tensors from %s not used by the model: %s", len(unused), path, unused[:8])
    return model
