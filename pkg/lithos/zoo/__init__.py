from typing import Iterable, Optional

from lithos.tensor import Tensor
from lithos.zoo.base import (
    ForwardOutput,
    Mode,
    Model,
    ModelSpec,
    TrainablePolicy,
    architectures,
    build_model,
    register_architecture,
)
from lithos.zoo.checkpoint import (
    encode_checkpoint,
    import_named_tensors,
    load_checkpoint,
    read_named_tensors,
    save_checkpoint,
    save_named_tensors,
)
from lithos.zoo.resnet import ResNet18, build_resnet18
from lithos.zoo.vit import ViT, build_vit


def forward(
    model: Model,
    batch: Tensor,
    mode: Mode = "eval",
    capture: Optional[Iterable[str]] = None,
) -> ForwardOutput:
    return model.forward(batch, mode=mode, capture=capture)


def replace_head(model: Model, new_num_classes: int, seed: int = 0) -> Model:
    return model.replace_head(new_num_classes, seed=seed)


def set_trainable(model: Model, policy: TrainablePolicy) -> Model:
    return model.set_trainable(policy)


__all__ = [
    "ForwardOutput",
    "Model",
    "ModelSpec",
    "ResNet18",
    "TrainablePolicy",
    "ViT",
    "architectures",
    "build_model",
    "build_resnet18",
    "build_vit",
    "encode_checkpoint",
    "forward",
    "import_named_tensors",
    "load_checkpoint",
    "read_named_tensors",
    "register_architecture",
    "replace_head",
    "save_checkpoint",
    "save_named_tensors",
    "set_trainable",
]
