from __future__ import annotations

import itertools
import logging
from typing import Callable, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt, PositiveFloat

from lithos.data import Corpus, fold_view, kfold
from lithos.train.loop import TrainConfig, evaluate, train
from lithos.zoo import Model

logger = logging.getLogger(__name__)

ModelFactory = Callable[[int], Model]


class GridPoint(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: PositiveFloat
    weight_decay: NonNegativeFloat
    optimizer: Literal["adamw"] = "adamw"
    epochs: Optional[NonNegativeInt] = None

    def apply(self, config: TrainConfig) -> TrainConfig:
        update = {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "optimizer": self.optimizer,
        }
        if self.epochs is not None:
            update["epochs"] = self.epochs
        return config.model_copy(update=update)


class HyperGrid(BaseModel):
    """Cartesian product of learning rates, weight decays, optimizers and (optionally) epochs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rates: list[PositiveFloat] = Field(min_length=1)
    weight_decays: list[NonNegativeFloat] = Field(min_length=1)
    optimizers: list[Literal["adamw"]] = Field(default=["adamw"], min_length=1)
    epochs: Optional[list[NonNegativeInt]] = None

    def points(self) -> list[GridPoint]:
        epochs: list[Optional[int]] = list(self.epochs) if self.epochs else [None]
        return [
            GridPoint(learning_rate=lr, weight_decay=wd, optimizer=opt, epochs=ep)
            for lr, wd, opt, ep in itertools.product(
                self.learning_rates, self.weight_decays, self.optimizers, epochs
            )
        ]

    @classmethod
    def resnet(cls) -> HyperGrid:
        return cls(learning_rates=[3e-4, 1e-4], weight_decays=[3e-4, 1e-4, 1e-5])

    @classmethod
    def vit(cls) -> HyperGrid:
        return cls(learning_rates=[1e-4, 1e-5], weight_decays=[1e-4, 1e-5])


class GridResult(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    point: GridPoint
    fold_accuracies: list[float]

    @property
    def mean_accuracy(self) -> float:
        return sum(self.fold_accuracies) / len(self.fold_accuracies)


class CrossValidation(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    k: int
    results: list[GridResult]
    best: GridPoint
    best_config: TrainConfig
    trainings: int


def select_best(results: list[GridResult]) -> GridResult:
    """Highest mean validation accuracy; ties go to the lower rate, then the lower decay."""
    return min(
        results,
        key=lambda r: (-r.mean_accuracy, r.point.learning_rate, r.point.weight_decay),
    )


def cross_validate(
    model_factory: ModelFactory,
    corpus: Corpus,
    k: int,
    grid: HyperGrid,
    base_config: TrainConfig,
    seed: int = 0,
) -> CrossValidation:
    """k-fold grid search on the train split; the test split is never touched.

    ``model_factory(seed)`` must return a fresh model for every training.
    """
    folds = kfold(corpus, k, seed)
    results: list[GridResult] = []
    trainings = 0
    for point in grid.points():
        config = point.apply(base_config).model_copy(update={"track_test_accuracy": False})
        accuracies = []
        for held_out in range(k):
            view = fold_view(corpus, folds, held_out)
            model = train(model_factory(config.seed), view, config).model
            accuracies.append(evaluate(model, view, "test", config.eval_batch_size).accuracy)
            trainings += 1
        result = GridResult(point=point, fold_accuracies=accuracies)
        logger.info(
            "grid lr=%g wd=%g epochs=%s mean validation accuracy %.4f",
            point.learning_rate,
            point.weight_decay,
            point.epochs if point.epochs is not None else config.epochs,
            result.mean_accuracy,
        )
        results.append(result)

    best = select_best(results).point
    return CrossValidation(
        k=k,
        results=results,
        best=best,
        best_config=best.apply(base_config),
        trainings=trainings,
    )
