from __future__ import annotations

import logging
from typing import Mapping, Optional

import numpy as np

from lithos.errors import NumericError
from lithos.tensor import DTYPE, Gradients, Tensor

logger = logging.getLogger(__name__)


class AdamWState:
    """First/second moment estimates per parameter name and the step count."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    def __init__(self) -> None:
        self.step = 0
        self.m = {}
        self.v = {}

    def moments(self, name: str, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.m:
            self.m[name] = np.zeros(shape, dtype=np.float64)
            self.v[name] = np.zeros(shape, dtype=np.float64)
        return self.m[name], self.v[name]


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> dict[str, Tensor]:
    """One AdamW update with decoupled weight decay.

    Only parameters present in ``grads`` move; everything else is returned as
    the same tensor object. ``state`` is advanced in place. The whole step is
    refused, with nothing updated, if any gradient is not finite.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(
                f"Non-finite gradient for parameter '{name}' at optimizer step {state.step + 1}; "
                f"lower the learning rate or check the inputs for NaN."
            )

    state.step += 1
    beta1, beta2 = betas
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step

    updated = dict(params)
    for name, grad in grads.items():
        theta = params[name].data.astype(np.float64)
        g = np.asarray(grad, dtype=np.float64)
        m, v = state.moments(name, theta.shape)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        theta = theta - lr * weight_decay * theta
        theta = theta - lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        tensor = Tensor.wrap(theta.astype(DTYPE), requires_grad=params[name].requires_grad)
        tensor.name = params[name].name
        updated[name] = tensor
    return updated


class AdamW:
    """AdamW over a model's trainable parameters.

    Parameters are replaced by new tensors each step; frozen parameters are
    never touched, so their checksums stay fixed.
    """

    def __init__(
        self,
        lr: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.state = AdamWState()

    def step(self, model, grads: Gradients, names: Optional[list[str]] = None) -> None:
        trainable = model.trainable_parameters()
        selected = list(trainable) if names is None else [n for n in names if n in trainable]
        raw = {name: grads.of(trainable[name]).data for name in selected}
        updated = adamw_step(
            trainable,
            raw,
            self.state,
            lr=self.lr,
            weight_decay=self.weight_decay,
            betas=self.betas,
            eps=self.eps,
        )
        for name in selected:
            model.parameters[name] = updated[name]

    def __repr__(self) -> str:
        return f"AdamW(lr={self.lr:g}, weight_decay={self.weight_decay:g}, step={self.state.step})"
