from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt

# metrics aggregated across seeds, in report order
SCALAR_METRICS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


class EpochRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epoch: int
    train_acc: float
    test_acc: Optional[float] = None
    lr: float
    loss: float


class MetricsReport(BaseModel):
    """Confusion counts (rows true, columns predicted) and the metrics derived from them."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    class_names: list[str]
    confusion: list[list[NonNegativeInt]]
    total: NonNegativeInt
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    history: list[EpochRecord] = Field(default_factory=list)

    @property
    def confusion_matrix(self) -> np.ndarray:
        return np.array(self.confusion, dtype=np.int64)

    def scalar(self, metric: str) -> float:
        return float(getattr(self, metric))


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.zeros(numerator.shape, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def metrics_from_predictions(
    y_true: Sequence[int] | np.ndarray,
    y_pred: Sequence[int] | np.ndarray,
    class_names: Sequence[str],
    history: Sequence[EpochRecord] = (),
) -> MetricsReport:
    """Count a confusion matrix and derive per-class and macro metrics.

    Precision and recall are 0 for a class with no predictions or no
    members; F1 is 0 when both are 0. Macro values are unweighted means.
    """
    k = len(class_names)
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"Got {y_true.size} labels but {y_pred.size} predictions.")
    for values, what in ((y_true, "label"), (y_pred, "prediction")):
        if values.size and (values.min() < 0 or values.max() >= k):
            raise ValueError(f"A {what} lies outside [0, {k}).")

    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    actual = confusion.sum(axis=1).astype(np.float64)
    precision = _safe_ratio(tp, predicted)
    recall = _safe_ratio(tp, actual)
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    total = int(confusion.sum())

    return MetricsReport(
        class_names=list(class_names),
        confusion=confusion.tolist(),
        total=total,
        accuracy=float(np.trace(confusion) / total) if total else 0.0,
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        history=list(history),
    )


class AggregateValue(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mean: float
    std: float

    def render(self, scale: float = 100.0, digits: int = 2) -> str:
        return f"{self.mean * scale:.{digits}f} ± {self.std * scale:.{digits}f}"


class SeedAggregate(BaseModel):
    """Mean and sample standard deviation (n - 1) of each metric over runs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    metrics: dict[str, AggregateValue]
    runs: int
    single_run: bool
    seeds: Optional[list[int]] = None

    def render(self, metric: str, scale: float = 100.0, digits: int = 2) -> str:
        text = self.metrics[metric].render(scale, digits)
        return f"{text} (single run)" if self.single_run else text


def aggregate_values(values: Sequence[float]) -> AggregateValue:
    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        raise ValueError("Cannot aggregate zero runs.")
    std = float(array.std(ddof=1)) if array.size > 1 else 0.0
    return AggregateValue(mean=float(array.mean()), std=std)


def aggregate_seeds(
    reports: Sequence[MetricsReport],
    seeds: Optional[Sequence[int]] = None,
) -> SeedAggregate:
    if not reports:
        raise ValueError("aggregate_seeds() needs at least one report.")
    metrics = {name: aggregate_values([r.scalar(name) for r in reports]) for name in SCALAR_METRICS}
    return SeedAggregate(
        metrics=metrics,
        runs=len(reports),
        single_run=len(reports) == 1,
        seeds=list(seeds) if seeds is not None else None,
    )
