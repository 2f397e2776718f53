"""Run configuration: one pydantic tree read from dotted ``key=value`` files.

File syntax::

    # comment
    model.kind=vit
    train.learning_rate=1e-4
    seeds=1,2,3
    data.root=            # empty value -> None

Values are coerced to the annotation of the addressed field through cached
``TypeAdapter``s; list and tuple fields take comma-separated values. Keys are
validated against the model tree, so a typo fails before anything runs.
"""

from __future__ import annotations

import logging
import types
import typing
from os import PathLike
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Optional, Self, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from lithos.data import Magnification, Polarization, SynthSpec, default_synth_spec
from lithos.data.base import SplitTag
from lithos.errors import ConfigError
from lithos.explain import DEFAULT_ANGLES, Method, Product
from lithos.explain.render import RenderMode
from lithos.train import HyperGrid, TrainConfig
from lithos.utils import get_cached_adapter
from lithos.zoo import ModelSpec

logger = logging.getLogger(__name__)

KEY_ALIASES = {
    "train.lr": "train.learning_rate",
    "train.wd": "train.weight_decay",
}


class SynthConfig(BaseModel):
    """Parameters handed to ``default_synth_spec``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_classes: PositiveInt = 10
    image_size: PositiveInt = 224
    sections_per_class: PositiveInt = 10
    seed: NonNegativeInt = 0
    polarizations: list[Polarization] = ["PPL", "XPL"]
    magnifications: list[Magnification] = ["10x"]
    stage_angles: Optional[list[NonNegativeInt]] = None
    density: tuple[PositiveInt, PositiveInt] = (3, 8)
    size_fraction: tuple[PositiveFloat, PositiveFloat] = (0.035, 0.07)

    def spec(self) -> SynthSpec:
        return default_synth_spec(
            num_classes=self.num_classes,
            image_size=self.image_size,
            sections_per_class=self.sections_per_class,
            seed=self.seed,
            polarizations=self.polarizations,
            magnifications=self.magnifications,
            stage_angles=self.stage_angles,
            density=self.density,
            size_fraction=self.size_fraction,
        )


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    source: Literal["dir", "synthetic"] = "synthetic"
    root: Optional[str] = None
    synth: SynthConfig = SynthConfig()

    @model_validator(mode="after")
    def root_for_dir(self) -> Self:
        if self.source == "dir" and not self.root:
            raise ValueError("data.source=dir needs data.root pointing at the corpus directory.")
        return self


class SplitConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_fraction: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: NonNegativeInt = 0
    group_by_sample: bool = False
    imagenet_stats: bool = False


class InitConfig(BaseModel):
    """Optional starting weights (named-tensor file or checkpoint)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    path: Optional[str] = None
    exclude: list[str] = ["fc.", "head."]


class XvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    k: PositiveInt = 3
    seed: NonNegativeInt = 0
    learning_rates: list[PositiveFloat] = [3e-4, 1e-4]
    weight_decays: list[float] = [3e-4, 1e-4, 1e-5]
    optimizers: list[Literal["adamw"]] = ["adamw"]
    epochs: Optional[list[NonNegativeInt]] = None

    def grid(self) -> HyperGrid:
        return HyperGrid(
            learning_rates=self.learning_rates,
            weight_decays=self.weight_decays,
            optimizers=self.optimizers,
            epochs=self.epochs,
        )


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    checkpoint: Optional[str] = None
    split: SplitTag = "test"


class ExplainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    checkpoint: Optional[str] = None
    split: SplitTag = "test"
    methods: list[Method] = ["guided_gradcam"]
    target: Literal["predicted", "label"] = "predicted"
    limit: Optional[PositiveInt] = None
    renders: list[RenderMode] = Field(default=["overlay", "masked"], min_length=1)
    cam_layer: Optional[str] = None
    product: Product = "raw"
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    threshold: float = Field(default=0.5, ge=0.0)
    layers: Optional[list[int]] = None
    heads: Optional[list[NonNegativeInt]] = None
    rotation: bool = False
    angles: list[float] = [float(a) for a in DEFAULT_ANGLES]
    top_fraction: float = Field(default=0.1, gt=0.0, le=1.0)


class RuntimeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    threads: PositiveInt = 1
    deterministic: bool = True


class RunConfig(BaseModel):
    """Everything one CLI invocation needs; written back as ``config.resolved``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    run_name: str = Field(default="run", min_length=1)
    outdir: str = "runs"
    seeds: list[NonNegativeInt] = Field(default=[0], min_length=1)
    data: DataConfig = DataConfig()
    split: SplitConfig = SplitConfig()
    model: ModelSpec = ModelSpec()
    init: InitConfig = InitConfig()
    train: TrainConfig = TrainConfig()
    xval: XvalConfig = XvalConfig()
    eval: EvalConfig = EvalConfig()
    explain: ExplainConfig = ExplainConfig()
    runtime: RuntimeConfig = RuntimeConfig()

    @property
    def run_dir(self) -> Path:
        return Path(self.outdir) / self.run_name


# parsing


def _unwrap_optional(annotation: Any) -> tuple[Any, bool]:
    origin = typing.get_origin(annotation)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if len(args) == 1 and len(args) != len(typing.get_args(annotation)):
            return args[0], True
    return annotation, False


def _is_sequence(annotation: Any) -> bool:
    return typing.get_origin(annotation) in (list, tuple)


def _is_model(annotation: Any) -> bool:
    return isinstance(annotation, type) and issubclass(annotation, BaseModel)


def _adapter(annotation: Any):
    try:
        return get_cached_adapter(annotation)
    except TypeError:
        # unhashable annotation
        return get_cached_adapter.__wrapped__(annotation)


def _leaf_annotation(key: str) -> Any:
    model: type[BaseModel] = RunConfig
    parts = key.split(".")
    for depth, part in enumerate(parts):
        fields = model.model_fields
        if part not in fields:
            scope = ".".join(parts[:depth]) or "top level"
            raise ConfigError(
                f"Unknown config key '{key}': '{part}' is not a field at {scope}. "
                f"Valid names there: {', '.join(sorted(fields))}."
            )
        annotation = fields[part].annotation
        if depth == len(parts) - 1:
            if _is_model(annotation):
                raise ConfigError(f"Config key '{key}' names a section; set one of its fields instead.")
            return annotation
        if not _is_model(annotation):
            raise ConfigError(f"Config key '{key}': '{part}' is a value, not a section.")
        model = annotation
    raise ConfigError(f"Empty config key '{key}'.")


def coerce(key: str, text: str) -> Any:
    """Convert the raw text of ``key`` to a value of the field's type."""
    annotation, optional = _unwrap_optional(_leaf_annotation(key))
    text = text.strip()
    if text == "":
        if optional:
            return None
        raw: Any = [] if _is_sequence(annotation) else text
    elif _is_sequence(annotation):
        raw = [item.strip() for item in text.split(",")]
    else:
        raw = text
    try:
        return _adapter(annotation).validate_python(raw)
    except ValidationError as error:
        raise ConfigError(f"Invalid value {text!r} for '{key}': {error.errors()[0]['msg']}.") from error


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{number}: expected key=value, got {line.strip()!r}.")
        key, value = content.split("=", 1)
        key = KEY_ALIASES.get(key.strip(), key.strip())
        pairs[key] = value.strip()
    return pairs


def parse_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}.")
    key, value = item.split("=", 1)
    key = key.strip()
    return KEY_ALIASES.get(key, key), value.strip()


def build_config(pairs: Mapping[str, str]) -> RunConfig:
    tree: dict[str, Any] = {}
    for key, text in pairs.items():
        value = coerce(key, text)
        node = tree
        *sections, leaf = key.split(".")
        for section in sections:
            node = node.setdefault(section, {})
        node[leaf] = value
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as error:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in error.errors()
        )
        raise ConfigError(f"Invalid run configuration: {problems}") from error


def load_config(
    path: Optional[str | PathLike[str]] = None,
    overrides: Iterable[str | tuple[str, str]] = (),
) -> RunConfig:
    """Read a config file (optional) and apply ``key=value`` overrides on top."""
    pairs: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file {path} does not exist.")
        pairs.update(parse_lines(path.read_text(encoding="utf-8"), str(path)))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        pairs[key] = value
    return build_config(pairs)


# dumping


def _render_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_render_value(v) for v in value)
    return str(value)


def flatten(model: BaseModel, prefix: str = "") -> dict[str, str]:
    flat: dict[str, str] = {}
    for name in type(model).model_fields:
        value = getattr(model, name)
        key = f"{prefix}{name}"
        if isinstance(value, BaseModel):
            flat.update(flatten(value, f"{key}."))
        else:
            flat[key] = _render_value(value)
    return flat


def dump_config(config: BaseModel, path: Optional[str | PathLike[str]] = None, prefix: str = "") -> str:
    """Every leaf, defaults included, as sorted ``key=value`` lines."""
    text = "".join(f"{key}={value}\n" for key, value in sorted(flatten(config, prefix).items()))
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text
