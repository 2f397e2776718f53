from __future__ import annotations

import logging
from typing import (
    Any,
    Callable,
    ClassVar,
    Iterable,
    Literal,
    NamedTuple,
    Optional,
    Self,
    TypeVar,
)

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from lithos.data.base import NormalizationStats
from lithos.errors import ProbeError, ShapeError, SpecError
from lithos.tensor import DTYPE, Tensor
from lithos.utils import checksum

logger = logging.getLogger(__name__)

ModelKind = Literal["resnet18", "vit"]
TrainablePolicy = Literal["head_only", "full"]
Mode = Literal["train", "eval"]

M = TypeVar("M", bound="type[Model]")


class ModelSpec(BaseModel):
    """Declarative architecture description.

    Defaults reproduce ResNet-18 / DeiT-Small geometry at 224 x 224. Smaller
    channel plans, depths and resolutions are valid for desk-scale runs.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ModelKind = "resnet18"
    num_classes: PositiveInt = 10
    input_resolution: PositiveInt = 224

    # vit
    patch_size: PositiveInt = 16
    depth: PositiveInt = 12
    heads: PositiveInt = 6
    hidden_dim: PositiveInt = 384
    mlp_dim: PositiveInt = 1536

    # resnet
    stage_channels: tuple[PositiveInt, PositiveInt, PositiveInt, PositiveInt] = (64, 128, 256, 512)
    blocks_per_stage: tuple[PositiveInt, PositiveInt, PositiveInt, PositiveInt] = (2, 2, 2, 2)

    @model_validator(mode="after")
    def check_geometry(self) -> Self:
        if self.kind == "vit":
            if self.hidden_dim % self.heads:
                raise ValueError(
                    f"hidden_dim {self.hidden_dim} is not divisible by heads {self.heads}."
                )
            if self.input_resolution % self.patch_size:
                raise ValueError(
                    f"input_resolution {self.input_resolution} is not divisible by "
                    f"patch_size {self.patch_size}."
                )
        else:
            if tuple(self.blocks_per_stage) != (2, 2, 2, 2):
                raise ValueError(
                    f"resnet18 has two basic blocks per stage, got {self.blocks_per_stage}; "
                    f"only the channel plan may be changed."
                )
        return self

    @property
    def tokens(self) -> int:
        grid = self.input_resolution // self.patch_size
        return grid * grid + 1

    @property
    def grid(self) -> int:
        return self.input_resolution // self.patch_size


class ForwardOutput(NamedTuple):
    logits: Tensor
    captured: dict[str, Any]


class Model:
    """Parameter set of an instantiated architecture plus its forward pass.

    Parameters are leaf tensors that are replaced (never written) when the
    optimizer steps; ``buffers`` holds batch-norm running statistics.
    """

    kind: ClassVar[str]
    head_prefix: ClassVar[str]
    cam_layer: ClassVar[Optional[str]] = None

    spec: ModelSpec
    parameters: dict[str, Tensor]
    buffers: dict[str, np.ndarray]
    trainable: dict[str, bool]
    policy: TrainablePolicy
    class_names: Optional[list[str]]
    normalization: Optional[NormalizationStats]

    def __init__(self, spec: ModelSpec) -> None:
        self.spec = spec
        self.parameters = {}
        self.buffers = {}
        self.trainable = {}
        self.policy = "full"
        self.class_names = None
        self.normalization = None

    # construction

    @classmethod
    def build(cls, spec: ModelSpec, seed: int = 0) -> Self:
        raise NotImplementedError()

    def add_parameter(self, name: str, value: np.ndarray) -> None:
        if name in self.parameters:
            raise SpecError(f"Parameter '{name}' is defined twice in {type(self).__name__}.")
        self.parameters[name] = Tensor(value, requires_grad=True, name=name)
        self.trainable[name] = True

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        array = np.array(value, dtype=DTYPE)
        array.setflags(write=False)
        self.buffers[name] = array

    def init_head(self, num_classes: int, rng: np.random.Generator) -> None:
        raise NotImplementedError()

    # introspection

    @property
    def probe_points(self) -> tuple[str, ...]:
        raise NotImplementedError()

    @property
    def feature_dim(self) -> int:
        return self.parameters[f"{self.head_prefix}weight"].shape[1]

    def is_head(self, name: str) -> bool:
        return name.startswith(self.head_prefix)

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.parameters.values()))

    def checksum(self, names: Optional[Iterable[str]] = None) -> str:
        selected = list(self.parameters) if names is None else list(names)
        return checksum(self.parameters[name].data for name in selected)

    def backbone_names(self) -> list[str]:
        return [name for name in self.parameters if not self.is_head(name)]

    @property
    def model_id(self) -> str:
        return f"{self.spec.kind}-{self.checksum()[:12]}"

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {name: t for name, t in self.parameters.items() if self.trainable[name]}

    # mutation (returns self, like absorb())

    def replace_head(self, num_classes: int, seed: int = 0) -> Self:
        """Re-initialize the classifier for ``num_classes``; nothing else changes."""
        if num_classes < 1:
            raise SpecError(f"num_classes must be positive, got {num_classes}.")
        for name in [n for n in self.parameters if self.is_head(n)]:
            del self.parameters[name]
            del self.trainable[name]
        self.init_head(num_classes, np.random.default_rng(seed))
        self.spec = self.spec.model_copy(update={"num_classes": num_classes})
        self.class_names = None
        self.set_trainable(self.policy)
        return self

    def set_trainable(self, policy: TrainablePolicy) -> Self:
        if policy not in ("head_only", "full"):
            raise SpecError(f"Unknown trainable policy {policy!r}; use 'head_only' or 'full'.")
        self.policy = policy
        for name, tensor in self.parameters.items():
            flag = policy == "full" or self.is_head(name)
            self.trainable[name] = flag
            tensor.requires_grad = flag
        return self

    def assign(self, name: str, value: np.ndarray) -> None:
        """Swap in a new buffer for parameter ``name`` (same shape)."""
        old = self.parameters[name]
        if old.shape != value.shape:
            raise ShapeError(
                f"Parameter '{name}' has shape {old.shape}, refusing new value of shape {value.shape}."
            )
        self.parameters[name] = Tensor.wrap(
            np.array(value, dtype=DTYPE), requires_grad=self.trainable[name]
        )
        self.parameters[name].name = name

    # running the network

    def bn_mode(self, mode: Mode) -> Mode:
        # frozen backbones keep their running statistics
        if mode == "train" and self.policy == "head_only":
            return "eval"
        return mode

    def check_batch(self, batch: Tensor) -> None:
        r = self.spec.input_resolution
        if batch.ndim != 4 or batch.shape[1] != 3 or batch.shape[2:] != (r, r):
            raise ShapeError(
                f"{type(self).__name__} expects a batch of shape N x 3 x {r} x {r}, got {batch.shape}. "
                f"Resize images to ModelSpec.input_resolution; other resolutions are rejected."
            )

    def check_capture(self, capture: Optional[Iterable[str]]) -> frozenset[str]:
        probes = frozenset(capture or ())
        unknown = probes - set(self.probe_points)
        if unknown:
            raise ProbeError(
                f"Unknown probe point(s) {sorted(unknown)} for {type(self).__name__}. "
                f"Available: {', '.join(self.probe_points)}."
            )
        return probes

    @staticmethod
    def keep(captured: dict[str, Any], probes: frozenset[str], name: str, value: Tensor) -> None:
        if name in probes:
            value.retain_grad()
            # captured maps become differentiation targets even under a frozen backbone
            value.requires_grad = True
            captured[name] = value

    def forward(
        self,
        batch: Tensor,
        mode: Mode = "eval",
        capture: Optional[Iterable[str]] = None,
    ) -> ForwardOutput:
        raise NotImplementedError()

    def __call__(self, batch: Tensor, mode: Mode = "eval") -> Tensor:
        return self.forward(batch, mode=mode).logits

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(classes={self.spec.num_classes}, "
            f"parameters={self.parameter_count()}, policy={self.policy!r})"
        )


architectures: dict[str, type[Model]] = {}


def register_architecture(kind: str) -> Callable[[M], M]:
    def decorator(model_cls: M) -> M:
        if kind in architectures:
            raise RuntimeError(
                f"Architecture '{kind}' is already registered with {architectures[kind].__name__}."
            )
        model_cls.kind = kind
        architectures[kind] = model_cls
        return model_cls

    return decorator


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    try:
        model_cls = architectures[spec.kind]
    except KeyError as error:
        raise SpecError(
            f"No architecture registered for kind '{spec.kind}'. "
            f"Known kinds: {', '.join(architectures)}."
        ) from error
    model = model_cls.build(spec, seed)
    logger.debug("Built %r", model)
    return model


def fan_in_normal(rng: np.random.Generator, shape: tuple[int, ...], gain: float = 2.0) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(shape) * np.sqrt(gain / fan_in)).astype(DTYPE)


def trunc_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by resampling."""
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return (values * std).astype(DTYPE)
