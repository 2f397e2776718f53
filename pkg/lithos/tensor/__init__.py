from lithos.tensor import functional
from lithos.tensor.base import (
    DTYPE,
    Gradients,
    Tape,
    TapeEntry,
    Tensor,
    active_tape,
    guided_relu,
    no_tape,
    op_registry,
)
from lithos.tensor.functional import (
    BatchNormOutput,
    batch_norm2d,
    conv2d,
    cross_entropy_loss,
    gelu,
    global_avg_pool,
    layer_norm,
    linear,
    matmul,
    max_pool2d,
    relu,
    softmax,
)

__all__ = [
    "DTYPE",
    "BatchNormOutput",
    "Gradients",
    "Tape",
    "TapeEntry",
    "Tensor",
    "active_tape",
    "batch_norm2d",
    "conv2d",
    "cross_entropy_loss",
    "functional",
    "gelu",
    "global_avg_pool",
    "guided_relu",
    "layer_norm",
    "linear",
    "matmul",
    "max_pool2d",
    "no_tape",
    "op_registry",
    "relu",
    "softmax",
]
