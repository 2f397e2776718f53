from __future__ import annotations

import numpy as np
import pytest

from lithos.errors import ConfigError, NumericError
from lithos.train import CosineScheduler, TrainConfig, evaluate, predict, train
from lithos.zoo import build_model, load_checkpoint


def quick_config(**overrides) -> TrainConfig:
    settings = dict(epochs=2, batch_size=3, learning_rate=1e-2, weight_decay=1e-4, augment_enabled=False)
    settings.update(overrides)
    return TrainConfig(**settings)


class TestTrain:
    """The epoch loop on a tiny corpus."""

    def test_zero_epochs(self, tmp_path, small_resnet, split_corpus):
        """No epochs leave the weights alone but still checkpoint the model."""
        before = small_resnet.checksum()
        result = train(small_resnet, split_corpus, quick_config(epochs=0), checkpoint_path=tmp_path / "m.flck")
        assert result.history == []
        assert small_resnet.checksum() == before
        assert load_checkpoint(tmp_path / "m.flck").class_names == split_corpus.class_names

    def test_history_and_metadata(self, small_resnet, split_corpus):
        """One record per epoch; the model learns its classes and normalization."""
        before = small_resnet.checksum()
        result = train(small_resnet, split_corpus, quick_config())
        assert [r.epoch for r in result.history] == [1, 2]
        assert all(r.test_acc is not None for r in result.history)
        assert result.history[0].lr == pytest.approx(1e-2)
        assert small_resnet.checksum() != before
        assert small_resnet.class_names == split_corpus.class_names
        assert small_resnet.normalization == split_corpus.normalization

    def test_reproducible(self, small_resnet_spec, split_corpus):
        """Equal seeds give bit-identical weights, augmentation included."""
        config = quick_config(augment_enabled=True)
        first = train(build_model(small_resnet_spec, 0), split_corpus, config).model
        second = train(build_model(small_resnet_spec, 0), split_corpus, config).model
        assert first.checksum() == second.checksum()

    def test_head_only_freezes_backbone(self, small_resnet, split_corpus):
        """Under head_only only the classifier moves, running statistics included."""
        backbone = small_resnet.backbone_names()
        before = small_resnet.checksum(backbone)
        head = small_resnet.checksum(["fc.weight", "fc.bias"])
        buffers = {name: value.copy() for name, value in small_resnet.buffers.items()}
        train(small_resnet, split_corpus, quick_config(policy="head_only"))
        assert small_resnet.checksum(backbone) == before
        assert small_resnet.checksum(["fc.weight", "fc.bias"]) != head
        for name, value in buffers.items():
            np.testing.assert_array_equal(small_resnet.buffers[name], value)

    def test_cosine_rates_in_history(self, small_resnet, split_corpus):
        """Each epoch records the cosine rate it ran at."""
        result = train(small_resnet, split_corpus, quick_config(epochs=3, scheduler="cosine"))
        cosine = CosineScheduler(1e-2, 3)
        assert [r.lr for r in result.history] == pytest.approx([cosine.lr_at(t) for t in range(3)])

    def test_test_tracking_can_be_disabled(self, small_resnet, split_corpus):
        """Without tracking the history carries no test accuracy."""
        result = train(small_resnet, split_corpus, quick_config(epochs=1, track_test_accuracy=False))
        assert result.history[0].test_acc is None

    def test_nan_loss_aborts(self, small_resnet, split_corpus):
        """A NaN weight surfaces as a numeric error on the first batch."""
        small_resnet.assign("fc.bias", np.array([np.nan, 0.0]))
        with pytest.raises(NumericError, match="epoch 1, batch 1"):
            train(small_resnet, split_corpus, quick_config())


class TestTrainPreconditions:
    """Misuse is reported before any work is done."""

    def test_unsplit_corpus(self, small_resnet, tiny_corpus):
        """Training needs train/test tags."""
        with pytest.raises(ConfigError, match="stratified_split"):
            train(small_resnet, tiny_corpus, quick_config())

    def test_class_count_mismatch(self, small_resnet, split_corpus):
        """A head of the wrong width must be replaced first."""
        small_resnet.replace_head(5)
        with pytest.raises(ConfigError, match="replace_head"):
            train(small_resnet, split_corpus, quick_config())


class TestEvaluate:
    """Eval-mode metrics."""

    def test_counts_the_split(self, small_resnet, split_corpus):
        """The report covers exactly the requested split."""
        report = evaluate(small_resnet, split_corpus, "test")
        assert report.total == len(split_corpus.indices("test"))
        assert 0.0 <= report.accuracy <= 1.0

    def test_batch_size_does_not_matter(self, small_resnet, split_corpus):
        """Eval-mode predictions are independent of how samples are batched."""
        samples = split_corpus.samples
        one, _ = predict(small_resnet, samples, split_corpus.normalization, batch_size=1)
        many, _ = predict(small_resnet, samples, split_corpus.normalization, batch_size=5)
        np.testing.assert_array_equal(one, many)
