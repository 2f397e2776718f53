"""Differentiable operations over :class:`~lithos.tensor.base.Tensor`.

Every op computes its forward pass with numpy, then hands the result and a
backward closure to :func:`~lithos.tensor.base.record`. Closures receive the
upstream gradient and a ``needs`` mask (one flag per input) and return one
gradient per input, ``None`` where the input needs none.
"""

from __future__ import annotations

import math
from typing import Any, NamedTuple, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from lithos.errors import (
    ConfigError,
    LabelRangeError,
    ShapeError,
    UninitializedStatsError,
)
from lithos.tensor.base import (
    DTYPE,
    Tensor,
    guided_relu_active,
    record,
    register_op,
)

IntPair = tuple[int, int]

GELU_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


def as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(value: int | Sequence[int], what: str) -> IntPair:
    if isinstance(value, (int, np.integer)):
        return int(value), int(value)
    pair = tuple(int(v) for v in value)
    if len(pair) != 2:
        raise ConfigError(f"{what} must be an int or a pair of ints, got {value!r}.")
    return pair  # type: ignore[return-value]


# elementwise arithmetic


@register_op("add")
def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (
            unbroadcast(g, a.shape) if needs[0] else None,
            unbroadcast(g, b.shape) if needs[1] else None,
        )

    return record("add", (a, b), a.data + b.data, backward)


@register_op("sub")
def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (
            unbroadcast(g, a.shape) if needs[0] else None,
            unbroadcast(-g, b.shape) if needs[1] else None,
        )

    return record("sub", (a, b), a.data - b.data, backward)


@register_op("mul")
def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (
            unbroadcast(g * b.data, a.shape) if needs[0] else None,
            unbroadcast(g * a.data, b.shape) if needs[1] else None,
        )

    return record("mul", (a, b), a.data * b.data, backward)


@register_op("div")
def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (
            unbroadcast(g / b.data, a.shape) if needs[0] else None,
            unbroadcast(-g * a.data / (b.data * b.data), b.shape) if needs[1] else None,
        )

    return record("div", (a, b), a.data / b.data, backward)


@register_op("neg")
def neg(a: Tensor) -> Tensor:
    return record("neg", (a,), -a.data, lambda g, needs: (-g,))


# reductions and shape plumbing


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"Axis {ax} is out of range for a {ndim}-d tensor.")
        normalized.append(ax % ndim)
    return tuple(sorted(normalized))


@register_op("sum")
def sum(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return record("sum", (x,), np.asarray(out, dtype=DTYPE), backward)


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


@register_op("reshape")
def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as error:
        raise ShapeError(f"Cannot reshape a tensor of shape {x.shape} into {shape}.") from error
    return record("reshape", (x,), out, lambda g, needs: (g.reshape(x.shape),))


@register_op("transpose")
def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    order = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(order) != list(range(x.ndim)):
        raise ShapeError(f"Axes {order} are not a permutation of a {x.ndim}-d tensor.")
    inverse = tuple(int(i) for i in np.argsort(order))
    return record(
        "transpose", (x,), x.data.transpose(order), lambda g, needs: (g.transpose(inverse),)
    )


@register_op("broadcast_to")
def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as error:
        raise ShapeError(f"Cannot broadcast shape {x.shape} to {shape}.") from error
    return record(
        "broadcast_to", (x,), out, lambda g, needs: (unbroadcast(g, x.shape),)
    )


@register_op("concat")
def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat() needs at least one tensor.")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as error:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"Cannot concatenate shapes {shapes} along axis {axis}.") from error
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", tuple(tensors), out, backward)


@register_op("getitem")
def getitem(x: Tensor, index: Any) -> Tensor:
    out = x.data[index]

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        grad = np.zeros(x.shape, dtype=DTYPE)
        np.add.at(grad, index, g)
        return (grad,)

    return record("getitem", (x,), np.array(out, dtype=DTYPE), backward)


# linear algebra


@register_op("matmul")
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul() needs operands with at least 2 dims, got {a.shape} and {b.shape}."
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul() inner dimensions disagree: {a.shape} @ {b.shape} "
            f"({a.shape[-1]} != {b.shape[-2]})."
        )
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as error:
        raise ShapeError(
            f"matmul() batch dimensions of {a.shape} and {b.shape} do not broadcast."
        ) from error

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (
            unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if needs[0] else None,
            unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if needs[1] else None,
        )

    return record("matmul", (a, b), out, backward)


@register_op("linear")
def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored out x in."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"linear() expects weight of shape (out, {x.shape[-1]}), got {weight.shape}."
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear() bias must have shape ({weight.shape[0]},), got {bias.shape}.")
    lead = x.shape[:-1]
    flat = x.data.reshape(-1, x.shape[-1])
    out = flat @ weight.data.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(*lead, weight.shape[0])

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        g2 = g.reshape(-1, weight.shape[0])
        grads = [
            (g2 @ weight.data).reshape(x.shape) if needs[0] else None,
            g2.T @ flat if needs[1] else None,
        ]
        if bias is not None:
            grads.append(g2.sum(axis=0) if needs[2] else None)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("linear", inputs, out, backward)


# convolution and pooling


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(
    x: np.ndarray, kernel: IntPair, stride: IntPair, padding: IntPair
) -> tuple[np.ndarray, int, int]:
    """Gather every receptive field of ``x`` (N,C,H,W) into rows.

    Returns ``cols`` of shape (N*OH*OW, C*kh*kw) in (n, oh, ow) row order and
    (c, i, j) column order, matching an OIHW weight flattened to (O, C*kh*kw).
    """
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, sh, ph)
    ow = conv_output_size(w, kw, sw, pw)
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    windows = windows[:, :, :oh, :ow]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def col2im(
    cols: np.ndarray,
    shape: tuple[int, int, int, int],
    kernel: IntPair,
    stride: IntPair,
    padding: IntPair,
    out_hw: IntPair,
) -> np.ndarray:
    """Scatter-add rows produced by :func:`im2col` back onto an (N,C,H,W) grid."""
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    oh, ow = out_hw
    n, c, h, w = shape
    patches = cols.reshape(n, oh, ow, c, kh, kw)
    padded = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += patches[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    return padded[:, :, ph : ph + h, pw : pw + w]


@register_op("conv2d")
def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int | IntPair = 1,
    padding: int | IntPair = 0,
) -> Tensor:
    """Cross-correlation of NCHW ``x`` with OIHW ``weight`` via im2col + GEMM."""
    stride = _pair(stride, "stride")
    padding = _pair(padding, "padding")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(
            f"conv2d() expects NCHW input and OIHW weight, got {x.shape} and {weight.shape}."
        )
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv2d() input has {x.shape[1]} channels but the weight expects {weight.shape[1]}."
        )
    if min(stride) < 1 or min(padding) < 0:
        raise ConfigError(f"conv2d() stride must be positive and padding non-negative, got {stride}, {padding}.")
    o, c, kh, kw = weight.shape
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d() bias must have shape ({o},), got {bias.shape}.")
    oh = conv_output_size(x.shape[2], kh, stride[0], padding[0])
    ow = conv_output_size(x.shape[3], kw, stride[1], padding[1])
    if oh < 1 or ow < 1:
        raise ConfigError(
            f"conv2d() output extent would be {oh}x{ow} for input {x.shape[2:]} with a "
            f"{kh}x{kw} kernel, stride {stride} and padding {padding}."
        )

    n = x.shape[0]
    cols, oh, ow = im2col(x.data, (kh, kw), stride, padding)
    wmat = weight.data.reshape(o, c * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        grad_x = (
            col2im(g2 @ wmat, x.shape, (kh, kw), stride, padding, (oh, ow))  # type: ignore[arg-type]
            if needs[0]
            else None
        )
        grad_w = (g2.T @ cols).reshape(weight.shape) if needs[1] else None
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g2.sum(axis=0) if needs[2] else None)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out, backward)


@register_op("max_pool2d")
def max_pool2d(
    x: Tensor,
    kernel: int | IntPair,
    stride: int | IntPair | None = None,
    padding: int | IntPair = 0,
) -> Tensor:
    """Max pooling; the gradient goes to the first maximum in row-major window order."""
    kh, kw = _pair(kernel, "kernel")
    sh, sw = _pair(stride if stride is not None else (kh, kw), "stride")
    ph, pw = _pair(padding, "padding")
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d() expects an NCHW tensor, got {x.shape}.")
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, sh, ph)
    ow = conv_output_size(w, kw, sw, pw)
    if oh < 1 or ow < 1:
        raise ConfigError(f"max_pool2d() output extent would be {oh}x{ow} for input {h}x{w}.")
    padded = (
        np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
        if (ph or pw)
        else x.data
    )
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :oh, :ow]
    flat = windows.reshape(n, c, oh, ow, kh * kw)
    winner = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, winner[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        grad = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=DTYPE)
        for i in range(kh):
            for j in range(kw):
                routed = np.where(winner == i * kw + j, g, 0.0)
                grad[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += routed
        return (grad[:, :, ph : ph + h, pw : pw + w],)

    return record("max_pool2d", (x,), np.ascontiguousarray(out), backward)


@register_op("global_avg_pool")
def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool() expects an NCHW tensor, got {x.shape}.")
    n, c, h, w = x.shape

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], x.shape),)

    return record("global_avg_pool", (x,), x.data.mean(axis=(2, 3)), backward)


# normalization


class BatchNormOutput(NamedTuple):
    output: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray


@register_op("batch_norm2d")
def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Optional[np.ndarray],
    running_var: Optional[np.ndarray],
    mode: str = "train",
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> BatchNormOutput:
    """Batch normalization over (N, H, W) per channel.

    Running statistics are returned, never updated in place. In train mode the
    running variance is updated with the unbiased batch variance.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm2d() expects an NCHW tensor, got {x.shape}.")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"batch_norm2d() gamma/beta must have shape ({channels},), "
            f"got {gamma.shape} and {beta.shape}."
        )
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    g_b = gamma.data[None, :, None, None]
    b_b = beta.data[None, :, None, None]

    if mode == "train":
        if count < 2:
            raise ShapeError(
                f"batch_norm2d() in train mode needs at least 2 values per channel, got {count}."
            )
        wide = x.data.astype(np.float64)
        batch_mean = wide.mean(axis=axes)
        batch_var = wide.var(axis=axes)
        inv_std = (1.0 / np.sqrt(batch_var + eps)).astype(DTYPE)
        x_hat = ((wide - batch_mean[None, :, None, None]) * inv_std[None, :, None, None]).astype(DTYPE)
        unbiased = batch_var * count / (count - 1)
        if running_mean is None or running_var is None:
            new_mean, new_var = batch_mean, unbiased
        else:
            new_mean = (1.0 - momentum) * running_mean + momentum * batch_mean
            new_var = (1.0 - momentum) * running_var + momentum * unbiased
        inv_b = inv_std[None, :, None, None]

        def backward(g: np.ndarray, needs: tuple[bool, ...]):
            grad_x = None
            if needs[0]:
                d_hat = g * g_b
                grad_x = (inv_b / count) * (
                    count * d_hat
                    - d_hat.sum(axis=axes, keepdims=True)
                    - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True)
                )
            return (
                grad_x,
                (g * x_hat).sum(axis=axes) if needs[1] else None,
                g.sum(axis=axes) if needs[2] else None,
            )

    elif mode == "eval":
        if running_mean is None or running_var is None:
            raise UninitializedStatsError(
                "batch_norm2d() in eval mode needs running statistics; run at least one "
                "train-mode pass or pass running_mean/running_var explicitly."
            )
        if running_mean.shape != (channels,) or running_var.shape != (channels,):
            raise ShapeError(f"batch_norm2d() running stats must have shape ({channels},).")
        new_mean, new_var = running_mean, running_var
        inv_std = (1.0 / np.sqrt(running_var.astype(np.float64) + eps)).astype(DTYPE)
        inv_b = inv_std[None, :, None, None]
        x_hat = ((x.data - running_mean[None, :, None, None].astype(DTYPE)) * inv_b).astype(DTYPE)

        def backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (
                g * g_b * inv_b if needs[0] else None,
                (g * x_hat).sum(axis=axes) if needs[1] else None,
                g.sum(axis=axes) if needs[2] else None,
            )

    else:
        raise ConfigError(f"batch_norm2d() mode must be 'train' or 'eval', got {mode!r}.")

    out = record("batch_norm2d", (x, gamma, beta), x_hat * g_b + b_b, backward)
    return BatchNormOutput(
        out,
        np.asarray(new_mean, dtype=DTYPE),
        np.asarray(new_var, dtype=DTYPE),
    )


@register_op("layer_norm")
def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise ShapeError(
            f"layer_norm() gamma/beta must have shape ({dim},), got {gamma.shape} and {beta.shape}."
        )
    wide = x.data.astype(np.float64)
    mu = wide.mean(axis=-1, keepdims=True)
    var = wide.var(axis=-1, keepdims=True)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(DTYPE)
    x_hat = ((wide - mu) * inv_std).astype(DTYPE)
    reduce_axes = tuple(range(x.ndim - 1))

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        grad_x = None
        if needs[0]:
            d_hat = g * gamma.data
            grad_x = (inv_std / dim) * (
                dim * d_hat
                - d_hat.sum(axis=-1, keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=-1, keepdims=True)
            )
        return (
            grad_x,
            (g * x_hat).sum(axis=reduce_axes) if needs[1] else None,
            g.sum(axis=reduce_axes) if needs[2] else None,
        )

    return record("layer_norm", (x, gamma, beta), x_hat * gamma.data + beta.data, backward)


# activations


@register_op("relu", "guided_relu")
def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    if guided_relu_active():

        def guided(g: np.ndarray, needs: tuple[bool, ...]):
            return (np.where(positive & (g > 0), g, 0.0),)

        return record("guided_relu", (x,), np.where(positive, x.data, 0.0), guided)

    return record(
        "relu",
        (x,),
        np.where(positive, x.data, 0.0),
        lambda g, needs: (np.where(positive, g, 0.0),),
    )


@register_op("gelu")
def gelu(x: Tensor) -> Tensor:
    """GELU, tanh form: 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x**3)))."""
    v = x.data
    inner = GELU_COEF * (v + GELU_CUBIC * v**3)
    t = np.tanh(inner)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        d_inner = GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * v**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return record("gelu", (x,), 0.5 * v * (1.0 + t), backward)


def _softmax(values: np.ndarray, axis: int) -> np.ndarray:
    shifted = values - values.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=axis, keepdims=True)


@register_op("softmax")
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax() axis {axis} is out of range for a {x.ndim}-d tensor.")
    y = _softmax(x.data.astype(np.float64), axis).astype(DTYPE)

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", (x,), y, backward)


# loss


@register_op("cross_entropy_loss")
def cross_entropy_loss(logits: Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_loss() expects N x K logits, got {logits.shape}.")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy_loss() got {labels.shape[0]} labels for {n} rows.")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)]
        raise LabelRangeError(
            f"Labels {bad.tolist()} are outside [0, {k}) for logits with {k} classes."
        )
    wide = logits.data.astype(np.float64)
    shifted = wide - wide.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def backward(g: np.ndarray, needs: tuple[bool, ...]):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return ((grad * (float(g.reshape(-1)[0]) / n)).astype(DTYPE),)

    return record("cross_entropy_loss", (logits,), np.asarray(loss, dtype=DTYPE), backward)
