from __future__ import annotations

import csv

import numpy as np
import pytest

from lithos.data import Corpus, Sample
from lithos.train import (
    CrossValidation,
    EpochRecord,
    GridPoint,
    GridResult,
    TrainConfig,
    aggregate_seeds,
    metrics_from_predictions,
    misclassifications_from_predictions,
    write_aggregate_csv,
    write_confusion_csv,
    write_consistency_csv,
    write_grid_csv,
    write_history_csv,
    write_metrics_csv,
    write_misclassification_csv,
)


def read_rows(path) -> list[list[str]]:
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def sections() -> Corpus:
    samples = [
        Sample(
            image=np.zeros((2, 2, 3), dtype=np.uint8),
            label=label,
            sample_id=section,
            polarization=polarization,
        )
        for label, section in [(0, "a1"), (0, "a2"), (1, "b1")]
        for polarization in ("PPL", "XPL")
    ]
    return Corpus(samples=samples, class_names=["calcite", "basalt"])


class TestMisclassifications:
    """Grouping and per-section consistency of errors."""

    def test_groups_and_ranking(self, sections):
        """Errors are grouped by (true, predicted); sections with repeated errors rank first."""
        # a1 wrong twice, a2 wrong once, b1 right
        report = misclassifications_from_predictions(sections, range(6), [1, 1, 1, 0, 1, 1])
        assert [(g.true_name, g.predicted_name) for g in report.groups] == [("calcite", "basalt")]
        assert [i.stem for i in report.groups[0].images] == [
            "a1__ppl__10x",
            "a1__xpl__10x",
            "a2__ppl__10x",
        ]
        assert [(c.sample_id, c.errors, c.images) for c in report.consistency] == [("a1", 2, 2), ("a2", 1, 2)]

    def test_no_errors(self, sections):
        """Perfect predictions give an empty report."""
        assert misclassifications_from_predictions(sections, range(6), [0, 0, 0, 0, 1, 1]).empty

    def test_csv_files(self, tmp_path, sections):
        """One misclassified row per image, one consistency row per section."""
        report = misclassifications_from_predictions(sections, range(6), [1, 1, 1, 0, 1, 1])
        rows = read_rows(write_misclassification_csv(tmp_path / "m.csv", report))
        assert rows[0] == ["true", "predicted", "stem", "sample_id", "polarization", "magnification", "rotation"]
        assert len(rows) == 4
        rows = read_rows(write_consistency_csv(tmp_path / "c.csv", report))
        assert rows[1] == ["a1", "0", "1", "2", "2"]


class TestMetricFiles:
    """Metrics, confusion, history, aggregate and grid CSVs."""

    @pytest.fixture
    def report(self):
        return metrics_from_predictions([0, 1, 1], [0, 1, 0], ["calcite", "basalt"])

    def test_metrics(self, tmp_path, report):
        """Accuracy, per-class precision/recall/F1 and the macro values, per seed."""
        rows = read_rows(write_metrics_csv(tmp_path / "metrics.csv", [(0, report), (1, report)]))
        assert rows[0] == ["metric", "class", "value", "run_seed"]
        assert len(rows) == 1 + 2 * (1 + 3 * 2 + 3)
        assert rows[1][:2] == ["accuracy", ""]
        assert rows[-1][3] == "1"

    def test_confusion(self, tmp_path, report):
        """Rows are true classes."""
        rows = read_rows(write_confusion_csv(tmp_path / "confusion.csv", report))
        assert rows == [["true\\predicted", "calcite", "basalt"], ["calcite", "1", "0"], ["basalt", "1", "1"]]

    def test_history(self, tmp_path):
        """Missing test accuracy is written as an empty cell."""
        history = [EpochRecord(epoch=1, train_acc=0.5, test_acc=None, lr=0.1, loss=0.7)]
        rows = read_rows(write_history_csv(tmp_path / "history.csv", history))
        assert rows[1] == ["1", "0.5", "", "0.1", "0.7"]

    def test_aggregate(self, tmp_path, report):
        """The aggregate lists every metric with its rendered form."""
        rows = read_rows(write_aggregate_csv(tmp_path / "aggregate.csv", aggregate_seeds([report])))
        assert [row[0] for row in rows[1:]] == ["accuracy", "macro_precision", "macro_recall", "macro_f1"]
        assert rows[1][4].endswith("(single run)")

    def test_grid(self, tmp_path):
        """The winning row is flagged."""
        best = GridPoint(learning_rate=1e-3, weight_decay=0.0)
        other = GridPoint(learning_rate=1e-2, weight_decay=0.0)
        cv = CrossValidation(
            k=2,
            results=[
                GridResult(point=other, fold_accuracies=[0.5, 0.5]),
                GridResult(point=best, fold_accuracies=[1.0, 0.5]),
            ],
            best=best,
            best_config=best.apply(TrainConfig()),
            trainings=4,
        )
        rows = read_rows(write_grid_csv(tmp_path / "grid.csv", cv))
        assert rows[0] == ["lr", "wd", "optimizer", "epochs", "fold0", "fold1", "mean", "best"]
        assert [row[-1] for row in rows[1:]] == ["0", "1"]
        assert rows[2][6] == "0.75"
