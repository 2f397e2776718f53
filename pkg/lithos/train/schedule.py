from __future__ import annotations

import math
from typing import Literal, Optional

SchedulerKind = Literal["plateau", "cosine", "none"]


class Scheduler:
    """Epoch-level learning-rate policy; :meth:`step` runs after each epoch."""

    lr: float

    def __init__(self, lr: float) -> None:
        self.lr = lr

    def step(self, epoch: int, metric: Optional[float] = None) -> float:
        return self.lr


class PlateauScheduler(Scheduler):
    """Multiply the rate by ``factor`` once the metric stalls for more than ``patience`` epochs.

    An epoch improves the metric when it beats the best value seen by more
    than ``min_delta`` (lower is better in ``min`` mode).
    """

    def __init__(
        self,
        lr: float,
        factor: float = 0.1,
        patience: int = 5,
        min_delta: float = 1e-4,
        mode: Literal["min", "max"] = "min",
        min_lr: float = 0.0,
    ) -> None:
        super().__init__(lr)
        if not 0.0 < factor < 1.0:
            raise ValueError(f"Plateau factor must be in (0, 1), got {factor}.")
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.mode = mode
        self.min_lr = min_lr
        self.best = math.inf if mode == "min" else -math.inf
        self.bad_epochs = 0

    def improved(self, metric: float) -> bool:
        if self.mode == "min":
            return metric < self.best - self.min_delta
        return metric > self.best + self.min_delta

    def step(self, epoch: int, metric: Optional[float] = None) -> float:
        if metric is None:
            raise ValueError("PlateauScheduler.step() needs the monitored metric.")
        if self.improved(metric):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
        return self.lr


class CosineScheduler(Scheduler):
    """``lr(t) = lr_final + (lr0 - lr_final) * (1 + cos(pi * t / T)) / 2`` for ``t`` in ``[0, T]``."""

    def __init__(self, lr: float, total_epochs: int, final_fraction: float = 0.0) -> None:
        super().__init__(lr)
        self.lr0 = lr
        self.lr_final = lr * final_fraction
        self.total_epochs = max(total_epochs, 1)

    def lr_at(self, t: int) -> float:
        t = min(max(t, 0), self.total_epochs)
        return self.lr_final + (self.lr0 - self.lr_final) * (1.0 + math.cos(math.pi * t / self.total_epochs)) / 2.0

    def step(self, epoch: int, metric: Optional[float] = None) -> float:
        # epoch just finished (0-based), so the next one runs at t = epoch + 1
        self.lr = self.lr_at(epoch + 1)
        return self.lr


def make_scheduler(
    kind: SchedulerKind,
    lr: float,
    epochs: int,
    *,
    factor: float = 0.1,
    patience: int = 5,
    min_delta: float = 1e-4,
    mode: Literal["min", "max"] = "min",
    final_fraction: float = 0.0,
) -> Scheduler:
    if kind == "plateau":
        return PlateauScheduler(lr, factor=factor, patience=patience, min_delta=min_delta, mode=mode)
    if kind == "cosine":
        return CosineScheduler(lr, epochs, final_fraction=final_fraction)
    if kind == "none":
        return Scheduler(lr)
    raise ValueError(f"Unknown scheduler {kind!r}; use 'plateau', 'cosine' or 'none'.")


def schedule_lr(scheduler: Scheduler, epoch: int, metric: Optional[float] = None) -> float:
    return scheduler.step(epoch, metric)
