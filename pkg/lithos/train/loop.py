from __future__ import annotations

import logging
from os import PathLike
from typing import Literal, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
)

from lithos.data import AugmentPolicy, Corpus, NormalizationStats, Sample, augment_all, to_batch
from lithos.data.base import SplitTag
from lithos.errors import ConfigError, NumericError
from lithos.tensor import Tape, cross_entropy_loss
from lithos.train.metrics import EpochRecord, MetricsReport, metrics_from_predictions
from lithos.train.optim import AdamW
from lithos.train.schedule import SchedulerKind, make_scheduler
from lithos.utils import keyed_rng
from lithos.zoo import Model, TrainablePolicy, save_checkpoint

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimization settings for one training run.

    Defaults are the from-scratch ResNet-18 recipe; the ``resnet_*`` and
    ``vit_*`` constructors return the other reference recipes.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: NonNegativeInt = 60
    batch_size: PositiveInt = 20
    learning_rate: PositiveFloat = 3e-4
    weight_decay: NonNegativeFloat = 3e-4
    optimizer: Literal["adamw"] = "adamw"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: PositiveFloat = 1e-8
    scheduler: SchedulerKind = "plateau"
    plateau_factor: float = Field(default=0.1, gt=0.0, lt=1.0)
    plateau_patience: NonNegativeInt = 5
    plateau_min_delta: NonNegativeFloat = 1e-4
    plateau_metric: Literal["train_loss", "train_acc"] = "train_loss"
    cosine_final_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: NonNegativeInt = 0
    policy: TrainablePolicy = "full"
    augment: AugmentPolicy = AugmentPolicy()
    augment_enabled: bool = True
    eval_batch_size: PositiveInt = 32
    track_test_accuracy: bool = True

    @classmethod
    def resnet_scratch(cls, **overrides) -> TrainConfig:
        return cls(**{"epochs": 60, "batch_size": 20, "learning_rate": 3e-4, "weight_decay": 3e-4, "scheduler": "plateau", **overrides})

    @classmethod
    def resnet_pretrained(cls, **overrides) -> TrainConfig:
        return cls(**{"epochs": 25, "batch_size": 32, "learning_rate": 3e-4, "weight_decay": 3e-4, "scheduler": "plateau", **overrides})

    @classmethod
    def vit_scratch(cls, **overrides) -> TrainConfig:
        return cls(**{"epochs": 125, "batch_size": 32, "learning_rate": 1e-4, "weight_decay": 1e-4, "scheduler": "cosine", **overrides})

    @classmethod
    def vit_pretrained(cls, **overrides) -> TrainConfig:
        return cls(**{"epochs": 60, "batch_size": 32, "learning_rate": 1e-5, "weight_decay": 1e-4, "scheduler": "cosine", **overrides})


class TrainResult(NamedTuple):
    model: Model
    history: list[EpochRecord]


def normalization_for(model: Model, corpus: Corpus) -> NormalizationStats:
    stats = model.normalization or corpus.normalization
    if stats is None:
        raise ConfigError(
            "No normalization statistics: the model carries none and the corpus has no split. "
            "Call stratified_split() on the corpus or load a trained checkpoint."
        )
    return stats


def predict(
    model: Model,
    samples: Sequence[Sample],
    stats: NormalizationStats,
    batch_size: int = 32,
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode argmax predictions (ties go to the lowest class) and logits."""
    resolution = model.spec.input_resolution
    chunks = []
    for start in range(0, len(samples), batch_size):
        batch = to_batch(samples[start : start + batch_size], stats, resolution)
        chunks.append(model(batch, mode="eval").numpy())
    logits = np.concatenate(chunks) if chunks else np.zeros((0, model.spec.num_classes), dtype=np.float32)
    return logits.argmax(axis=1), logits


def evaluate(
    model: Model,
    corpus: Corpus,
    split: Optional[SplitTag] = "test",
    batch_size: int = 32,
) -> MetricsReport:
    """Metrics of eval-mode predictions on one split (no augmentation, no tape)."""
    indices = corpus.indices(split)
    samples = [corpus.samples[i] for i in indices]
    predictions, _ = predict(model, samples, normalization_for(model, corpus), batch_size)
    labels = [s.label for s in samples]
    return metrics_from_predictions(labels, predictions, corpus.class_names)


def _accuracy(model: Model, corpus: Corpus, indices: list[int], stats: NormalizationStats, batch_size: int) -> float:
    samples = [corpus.samples[i] for i in indices]
    predictions, _ = predict(model, samples, stats, batch_size)
    return float(np.mean(predictions == np.array([s.label for s in samples])))


def train(
    model: Model,
    corpus: Corpus,
    config: TrainConfig,
    checkpoint_path: Optional[str | PathLike[str]] = None,
) -> TrainResult:
    """Fit ``model`` on the train split of ``corpus``.

    Every epoch reshuffles the train split with the stream ``(seed, epoch)``
    and keeps the last incomplete batch. Test accuracy is recorded for the
    history only and never steers training.
    """
    if corpus.splits is None:
        raise ConfigError("train() needs a split-tagged corpus; call stratified_split() first.")
    train_indices = corpus.indices("train")
    if not train_indices:
        raise ConfigError("The train split is empty; raise train_fraction or add samples.")
    if model.spec.num_classes != corpus.num_classes:
        raise ConfigError(
            f"The model predicts {model.spec.num_classes} classes but the corpus has "
            f"{corpus.num_classes}; call replace_head() first."
        )
    test_indices = corpus.indices("test")
    stats = corpus.normalization
    if stats is None:
        raise ConfigError("The corpus carries no normalization statistics; build it with Corpus.with_splits().")

    model.set_trainable(config.policy)
    model.class_names = list(corpus.class_names)
    model.normalization = stats
    resolution = model.spec.input_resolution

    optimizer = AdamW(config.learning_rate, config.weight_decay, config.betas, config.eps)
    scheduler = make_scheduler(
        config.scheduler,
        config.learning_rate,
        config.epochs,
        factor=config.plateau_factor,
        patience=config.plateau_patience,
        min_delta=config.plateau_min_delta,
        mode="min" if config.plateau_metric == "train_loss" else "max",
        final_fraction=config.cosine_final_fraction,
    )
    history: list[EpochRecord] = []

    for epoch in range(config.epochs):
        order = keyed_rng(config.seed, epoch).permutation(len(train_indices))
        loss_sum, correct = 0.0, 0
        lr = optimizer.lr
        for batch_number, start in enumerate(range(0, len(order), config.batch_size)):
            indices = [train_indices[p] for p in order[start : start + config.batch_size]]
            samples = [corpus.samples[i] for i in indices]
            if config.augment_enabled:
                samples = augment_all(samples, config.augment, config.seed, epoch, indices, resolution)
            labels = np.array([s.label for s in samples], dtype=np.int64)
            batch = to_batch(samples, stats, resolution)

            with Tape() as tape:
                logits = model(batch, mode="train")
                loss = cross_entropy_loss(logits, labels)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(
                    f"Loss became {value} at epoch {epoch + 1}, batch {batch_number + 1}; "
                    f"lower the learning rate."
                )
            grads = tape.backward(loss)
            optimizer.step(model, grads)
            loss_sum += value * len(samples)
            correct += int((logits.numpy().argmax(axis=1) == labels).sum())

        train_loss = loss_sum / len(train_indices)
        train_acc = correct / len(train_indices)
        test_acc = None
        if config.track_test_accuracy and test_indices:
            test_acc = _accuracy(model, corpus, test_indices, stats, config.eval_batch_size)
        history.append(EpochRecord(epoch=epoch + 1, train_acc=train_acc, test_acc=test_acc, lr=lr, loss=train_loss))
        logger.info(
            "epoch %d/%d loss=%.4f train_acc=%.4f test_acc=%s lr=%.3g",
            epoch + 1,
            config.epochs,
            train_loss,
            train_acc,
            "n/a" if test_acc is None else f"{test_acc:.4f}",
            lr,
        )
        monitored = train_loss if config.plateau_metric == "train_loss" else train_acc
        optimizer.lr = scheduler.step(epoch, monitored)

    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    return TrainResult(model, history)
