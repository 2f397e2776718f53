from lithos.train.loop import TrainConfig, TrainResult, evaluate, normalization_for, predict, train
from lithos.train.metrics import (
    AggregateValue,
    EpochRecord,
    MetricsReport,
    SeedAggregate,
    aggregate_seeds,
    aggregate_values,
    metrics_from_predictions,
)
from lithos.train.optim import AdamW, AdamWState, adamw_step
from lithos.train.report import (
    MisclassificationReport,
    misclassification_report,
    misclassifications_from_predictions,
    write_aggregate_csv,
    write_confusion_csv,
    write_consistency_csv,
    write_grid_csv,
    write_history_csv,
    write_metrics_csv,
    write_misclassification_csv,
)
from lithos.train.schedule import (
    CosineScheduler,
    PlateauScheduler,
    Scheduler,
    make_scheduler,
    schedule_lr,
)
from lithos.train.xval import CrossValidation, GridPoint, GridResult, HyperGrid, cross_validate, select_best

__all__ = [
    "AdamW",
    "AdamWState",
    "AggregateValue",
    "CosineScheduler",
    "CrossValidation",
    "EpochRecord",
    "GridPoint",
    "GridResult",
    "HyperGrid",
    "MetricsReport",
    "MisclassificationReport",
    "PlateauScheduler",
    "Scheduler",
    "SeedAggregate",
    "TrainConfig",
    "TrainResult",
    "adamw_step",
    "aggregate_seeds",
    "aggregate_values",
    "cross_validate",
    "evaluate",
    "make_scheduler",
    "metrics_from_predictions",
    "misclassification_report",
    "misclassifications_from_predictions",
    "normalization_for",
    "predict",
    "schedule_lr",
    "select_best",
    "train",
    "write_aggregate_csv",
    "write_confusion_csv",
    "write_consistency_csv",
    "write_grid_csv",
    "write_history_csv",
    "write_metrics_csv",
    "write_misclassification_csv",
]
