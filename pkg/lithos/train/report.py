"""Misclassification analysis and the CSV files written into a run directory."""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from os import PathLike
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from lithos.data import Corpus
from lithos.data.base import SplitTag
from lithos.train.loop import normalization_for, predict
from lithos.train.metrics import EpochRecord, MetricsReport, SeedAggregate
from lithos.train.xval import CrossValidation
from lithos.zoo import Model

logger = logging.getLogger(__name__)


class MisclassifiedImage(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stem: str
    sample_id: str
    polarization: str
    magnification: str
    rotation_index: Optional[int] = None


class ErrorGroup(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    true_label: int
    predicted_label: int
    true_name: str
    predicted_name: str
    images: list[MisclassifiedImage]


class SectionConsistency(BaseModel):
    """How many images of one section share the same wrong prediction."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_id: str
    true_label: int
    predicted_label: int
    errors: int
    images: int

    @property
    def fraction(self) -> float:
        return self.errors / self.images


class MisclassificationReport(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    groups: list[ErrorGroup]
    consistency: list[SectionConsistency]

    @property
    def empty(self) -> bool:
        return not self.groups


def misclassifications_from_predictions(
    corpus: Corpus,
    indices: Sequence[int],
    predictions: Sequence[int] | np.ndarray,
) -> MisclassificationReport:
    """Group wrong predictions by (true, predicted) and rank sections by repeated errors."""
    grouped: dict[tuple[int, int], list[MisclassifiedImage]] = defaultdict(list)
    per_section = Counter(corpus.samples[i].sample_id for i in indices)
    repeated: Counter[tuple[str, int, int]] = Counter()
    for i, predicted in zip(indices, predictions):
        sample = corpus.samples[i]
        predicted = int(predicted)
        if predicted == sample.label:
            continue
        grouped[(sample.label, predicted)].append(
            MisclassifiedImage(
                stem=sample.stem,
                sample_id=sample.sample_id,
                polarization=sample.polarization,
                magnification=sample.magnification,
                rotation_index=sample.rotation_index,
            )
        )
        repeated[(sample.sample_id, sample.label, predicted)] += 1

    names = corpus.class_names
    groups = [
        ErrorGroup(
            true_label=t,
            predicted_label=p,
            true_name=names[t],
            predicted_name=names[p],
            images=images,
        )
        for (t, p), images in sorted(grouped.items())
    ]
    consistency = [
        SectionConsistency(sample_id=sid, true_label=t, predicted_label=p, errors=n, images=per_section[sid])
        for (sid, t, p), n in repeated.items()
    ]
    consistency.sort(key=lambda c: (-c.errors, -c.fraction, c.sample_id))
    return MisclassificationReport(groups=groups, consistency=consistency)


def misclassification_report(
    model: Model,
    corpus: Corpus,
    split: Optional[SplitTag] = "test",
    batch_size: int = 32,
) -> MisclassificationReport:
    indices = corpus.indices(split)
    samples = [corpus.samples[i] for i in indices]
    predictions, _ = predict(model, samples, normalization_for(model, corpus), batch_size)
    return misclassifications_from_predictions(corpus, indices, predictions)


# csv writers


def write_rows(path: str | PathLike[str], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.debug("Wrote %s", path)
    return path


def metric_rows(report: MetricsReport, run_seed: int | str = "") -> list[tuple]:
    rows: list[tuple] = [("accuracy", "", report.accuracy, run_seed)]
    for metric in ("precision", "recall", "f1"):
        for name, value in zip(report.class_names, getattr(report, metric)):
            rows.append((metric, name, value, run_seed))
    for metric in ("macro_precision", "macro_recall", "macro_f1"):
        rows.append((metric, "", getattr(report, metric), run_seed))
    return rows


def write_metrics_csv(path: str | PathLike[str], reports: Sequence[tuple[int | str, MetricsReport]]) -> Path:
    """``metric,class,value,run_seed`` rows for each ``(seed, report)`` pair."""
    rows = [row for seed, report in reports for row in metric_rows(report, seed)]
    return write_rows(path, ("metric", "class", "value", "run_seed"), rows)


def write_confusion_csv(path: str | PathLike[str], report: MetricsReport) -> Path:
    rows = [(name, *counts) for name, counts in zip(report.class_names, report.confusion)]
    return write_rows(path, ("true\\predicted", *report.class_names), rows)


def write_history_csv(path: str | PathLike[str], history: Sequence[EpochRecord]) -> Path:
    rows = [
        (r.epoch, r.train_acc, "" if r.test_acc is None else r.test_acc, r.lr, r.loss)
        for r in history
    ]
    return write_rows(path, ("epoch", "train_acc", "test_acc", "lr", "loss"), rows)


def write_aggregate_csv(path: str | PathLike[str], aggregate: SeedAggregate) -> Path:
    rows = [
        (name, value.mean, value.std, aggregate.runs, aggregate.render(name))
        for name, value in aggregate.metrics.items()
    ]
    return write_rows(path, ("metric", "mean", "std", "runs", "rendered"), rows)


def write_grid_csv(path: str | PathLike[str], cv: CrossValidation) -> Path:
    folds = [f"fold{i}" for i in range(cv.k)]
    rows = [
        (
            r.point.learning_rate,
            r.point.weight_decay,
            r.point.optimizer,
            "" if r.point.epochs is None else r.point.epochs,
            *r.fold_accuracies,
            r.mean_accuracy,
            int(r.point == cv.best),
        )
        for r in cv.results
    ]
    return write_rows(path, ("lr", "wd", "optimizer", "epochs", *folds, "mean", "best"), rows)


def write_misclassification_csv(path: str | PathLike[str], report: MisclassificationReport) -> Path:
    rows = [
        (
            g.true_name,
            g.predicted_name,
            image.stem,
            image.sample_id,
            image.polarization,
            image.magnification,
            "" if image.rotation_index is None else image.rotation_index,
        )
        for g in report.groups
        for image in g.images
    ]
    return write_rows(
        path,
        ("true", "predicted", "stem", "sample_id", "polarization", "magnification", "rotation"),
        rows,
    )


def write_consistency_csv(path: str | PathLike[str], report: MisclassificationReport) -> Path:
    rows = [
        (c.sample_id, c.true_label, c.predicted_label, c.errors, c.images) for c in report.consistency
    ]
    return write_rows(path, ("sample_id", "true", "predicted", "errors", "images"), rows)
