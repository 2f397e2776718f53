from __future__ import annotations

import contextlib
import logging
from collections import Counter
from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import (
    Any,
    Callable,
    Generator,
    Iterable,
    Optional,
    Sequence,
    Self,
)

import numpy as np

from lithos.errors import RetentionError, ShapeError, TapeConsumedError

logger = logging.getLogger(__name__)

DTYPE = np.float32

# backward(upstream, needs) -> one gradient (or None) per input
BackwardFn = Callable[[np.ndarray, tuple[bool, ...]], Sequence[Optional[np.ndarray]]]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=DTYPE)
    if array.flags.writeable:
        array.setflags(write=False)
    return array


class Tensor:
    """An immutable float32 array that can take part in a recorded tape.

    The element buffer is made read-only on construction, so no operation can
    mutate a tensor after it was produced. Gradients never live on the tensor
    itself; they are returned by :meth:`Tape.backward` keyed by tensor.
    """

    __slots__ = ("data", "requires_grad", "node", "retains_grad", "name", "__weakref__")

    data: np.ndarray
    requires_grad: bool
    node: Optional[int]
    retains_grad: bool
    name: Optional[str]

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        *,
        name: Optional[str] = None,
    ) -> None:
        # public constructor always copies: callers keep ownership of their buffer
        self.data = _frozen(np.array(data, dtype=DTYPE, copy=True))
        self.requires_grad = requires_grad
        self.node = None
        self.retains_grad = False
        self.name = name

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> Tensor:
        """Adopt ``array`` without copying. Only for freshly produced buffers."""
        tensor = cls.__new__(cls)
        tensor.data = _frozen(array)
        tensor.requires_grad = requires_grad
        tensor.node = None
        tensor.retains_grad = False
        tensor.name = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor.wrap(self.data, requires_grad=False)

    def retain_grad(self) -> Self:
        """Flag this tensor so :meth:`Tape.grad_of_output_wrt` may target it."""
        self.retains_grad = True
        return self

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # identity hashing keeps tensors usable as gradient-map keys
    __hash__ = object.__hash__

    def __add__(self, other: Any) -> Tensor:
        return F.add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return F.add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return F.sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return F.sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return F.mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return F.mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return F.div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return F.div(other, self)

    def __neg__(self) -> Tensor:
        return F.neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return F.getitem(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int | tuple[int, ...]) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return F.reshape(self, tuple(shape))  # type: ignore[arg-type]

    def transpose(self, *axes: int) -> Tensor:
        return F.transpose(self, axes or None)

    @property
    def T(self) -> Tensor:
        return F.transpose(self, None)


@dataclass(frozen=True, slots=True)
class TapeEntry:
    op: str
    inputs: tuple[int, ...]
    needs: tuple[bool, ...]
    output: int
    backward: BackwardFn


class Gradients(dict[Tensor, Tensor]):
    """Gradient map keyed by tensor identity."""

    def of(self, tensor: Tensor) -> Tensor:
        try:
            return self[tensor]
        except KeyError:
            return Tensor.wrap(np.zeros(tensor.shape, dtype=DTYPE))


class Tape:
    """Ordered record of differentiable operations for one forward pass.

    Activate with ``with Tape() as tape:``; every op whose inputs require a
    gradient is appended in execution order, which is a topological order of
    the graph. A tape supports exactly one reverse sweep.
    """

    entries: list[TapeEntry]
    consumed: bool
    active_tokens: list[Token[Optional[Tape]]]

    def __init__(self) -> None:
        self.entries = []
        self.consumed = False
        self.active_tokens = []
        self._tensors: list[Tensor] = []
        self._index: dict[int, int] = {}
        self._produced: set[int] = set()

    def __enter__(self) -> Self:
        token = active_tape.set(self)
        self.active_tokens.append(token)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        token = self.active_tokens.pop()
        active_tape.reset(token)

    def __len__(self) -> int:
        return len(self.entries)

    def _node_of(self, tensor: Tensor) -> int:
        key = id(tensor)
        index = self._index.get(key)
        if index is None:
            index = len(self._tensors)
            self._tensors.append(tensor)
            self._index[key] = index
        return index

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward: BackwardFn,
    ) -> Tensor:
        if self.consumed:
            raise TapeConsumedError(
                f"Cannot record '{op}' on a tape whose backward pass already ran. "
                f"Open a new Tape() for every forward pass."
            )
        needs = tuple(t.requires_grad for t in inputs)
        ids = tuple(self._node_of(t) for t in inputs)
        out_index = self._node_of(output)
        output.node = out_index
        self._produced.add(out_index)
        self.entries.append(TapeEntry(op, ids, needs, out_index, backward))
        return output

    def op_counts(self) -> Counter[str]:
        return Counter(entry.op for entry in self.entries)

    def _propagate(self, scalar: Tensor) -> dict[int, np.ndarray]:
        if self.consumed:
            raise TapeConsumedError(
                "This tape has already been consumed by a backward pass. "
                "Re-run the forward pass under a fresh Tape() to differentiate again."
            )
        if scalar.size != 1:
            raise ShapeError(
                f"backward() needs a scalar output, got a tensor of shape {scalar.shape}."
            )
        self.consumed = True

        grads: dict[int, np.ndarray] = {}
        root = self._index.get(id(scalar))
        if root is None:
            # the scalar does not depend on anything that requires a gradient
            return grads
        grads[root] = np.ones(scalar.shape, dtype=DTYPE)
        for entry in reversed(self.entries):
            upstream = grads.get(entry.output)
            if upstream is None:
                continue
            input_grads = entry.backward(upstream, entry.needs)
            for index, need, grad in zip(entry.inputs, entry.needs, input_grads):
                if not need or grad is None:
                    continue
                grad = np.asarray(grad, dtype=DTYPE)
                previous = grads.get(index)
                grads[index] = grad if previous is None else previous + grad
        logger.debug("Reverse sweep over %d tape entries", len(self.entries))
        return grads

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] = ()) -> Gradients:
        """Reverse sweep from ``loss``; returns gradients of every leaf.

        Tensors listed in ``wrt`` that did not take part in the forward pass
        receive zero gradients.
        """
        grads = self._propagate(loss)
        result = Gradients()
        for index, tensor in enumerate(self._tensors):
            if index in self._produced or not tensor.requires_grad:
                continue
            grad = grads.get(index)
            result[tensor] = Tensor.wrap(
                grad if grad is not None else np.zeros(tensor.shape, dtype=DTYPE)
            )
        for tensor in wrt:
            if tensor not in result:
                result[tensor] = Tensor.wrap(np.zeros(tensor.shape, dtype=DTYPE))
        return result

    def grad_of_output_wrt(self, intermediate: Tensor, scalar: Tensor) -> Tensor:
        """Gradient of ``scalar`` with respect to a retained ``intermediate``."""
        if not intermediate.retains_grad:
            raise RetentionError(
                f"{intermediate!r} was not flagged for gradient retention. "
                f"Call .retain_grad() on it (or request it as a capture probe) "
                f"before the forward pass consumes it."
            )
        grads = self._propagate(scalar)
        index = self._index.get(id(intermediate))
        grad = grads.get(index) if index is not None else None
        if grad is None:
            grad = np.zeros(intermediate.shape, dtype=DTYPE)
        return Tensor.wrap(grad)


active_tape: ContextVar[Optional[Tape]] = ContextVar("active_tape", default=None)
_guided: ContextVar[bool] = ContextVar("guided_relu", default=False)


@contextlib.contextmanager
def guided_relu() -> Generator[None, None, None]:
    """Within this block ReLU records the guided backward rule.

    The guided rule passes a gradient only where both the forward input and
    the upstream gradient are positive.
    """
    token = _guided.set(True)
    try:
        yield
    finally:
        _guided.reset(token)


def guided_relu_active() -> bool:
    return _guided.get()


@contextlib.contextmanager
def no_tape() -> Generator[None, None, None]:
    token = active_tape.set(None)
    try:
        yield
    finally:
        active_tape.reset(token)


# registry of differentiable op kinds, filled by @register_op in functional.py
op_registry: dict[str, Callable[..., Any]] = {}


def register_op(*names: str):
    def decorator(fn: Callable[..., Any]) -> Callable[..., Any]:
        for name in names or (fn.__name__,):
            if name in op_registry:
                raise RuntimeError(f"Op '{name}' is already registered by {op_registry[name]!r}.")
            op_registry[name] = fn
        return fn

    return decorator


def record(
    op: str,
    inputs: Sequence[Tensor],
    out: np.ndarray,
    backward: BackwardFn,
) -> Tensor:
    """Wrap ``out`` and append it to the active tape when gradients are needed."""
    if op not in op_registry:
        raise RuntimeError(f"Op '{op}' is not registered; decorate it with @register_op.")
    requires_grad = any(t.requires_grad for t in inputs)
    output = Tensor.wrap(out, requires_grad=requires_grad)
    tape = active_tape.get()
    if tape is None or not requires_grad:
        return output
    return tape.record(op, inputs, output, backward)


from lithos.tensor import functional as F  # noqa: E402
