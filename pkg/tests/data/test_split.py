from __future__ import annotations

import numpy as np
import pytest

from lithos.data import (
    Corpus,
    NormalizationStats,
    Sample,
    default_synth_spec,
    fold_view,
    generate_synthetic,
    kfold,
    split_counts,
    stratified_split,
)
from lithos.errors import SplitError


def flat_corpus(per_class: list[int], views: int = 1) -> Corpus:
    samples = []
    for label, count in enumerate(per_class):
        for section in range(count):
            for view in range(views):
                value = (label * 50 + section * 7 + view) % 256
                samples.append(
                    Sample(
                        image=np.full((4, 4, 3), value, dtype=np.uint8),
                        label=label,
                        sample_id=f"c{label}-{section}",
                        polarization=("PPL", "XPL")[view],
                    )
                )
    return Corpus(samples=samples, class_names=[f"c{i}" for i in range(len(per_class))])


class TestStratifiedSplit:
    """Per-class train/test assignment."""

    def test_half_up_rounding(self):
        """Half of five members rounds up to three train samples."""
        split = stratified_split(flat_corpus([5, 4]), train_fraction=0.5)
        counts = split_counts(split)
        assert counts["train"].tolist() == [3, 2]
        assert counts["test"].tolist() == [2, 2]

    def test_every_sample_tagged_once(self):
        """Train and test partition the corpus."""
        split = stratified_split(flat_corpus([6, 6, 6]), train_fraction=0.8)
        train, test = set(split.indices("train")), set(split.indices("test"))
        assert train.isdisjoint(test)
        assert train | test == set(range(len(split)))

    def test_deterministic(self):
        """Equal seeds give equal tags; seeds do matter."""
        corpus = flat_corpus([8, 8])
        assert stratified_split(corpus, seed=4).splits == stratified_split(corpus, seed=4).splits
        assert len({tuple(stratified_split(corpus, seed=s).splits) for s in range(8)}) > 1

    def test_everything_to_train(self):
        """A fraction of 1 leaves the test split empty."""
        split = stratified_split(flat_corpus([3, 3]), train_fraction=1.0)
        assert split.indices("test") == []

    def test_invalid_fraction(self):
        """Fractions outside (0, 1] are refused."""
        with pytest.raises(SplitError):
            stratified_split(flat_corpus([3, 3]), train_fraction=0.0)

    def test_normalization_from_train_only(self):
        """Statistics are computed over train images and nothing else."""
        split = stratified_split(flat_corpus([5, 5]), train_fraction=0.6)
        expected = NormalizationStats.from_images(split.samples[i].image for i in split.indices("train"))
        assert split.normalization == expected

    def test_imagenet_stats(self):
        """The ImageNet statistics can replace the train ones."""
        split = stratified_split(flat_corpus([3, 3]), imagenet_stats=True)
        assert split.normalization == NormalizationStats.imagenet()

    def test_empty_train_split_refused(self):
        """Singleton classes at a low fraction round to zero train samples and are refused."""
        with pytest.raises(SplitError, match="tagged 'train'"):
            stratified_split(flat_corpus([1, 1]), train_fraction=0.2)

    def test_empty_train_split_with_imagenet_stats(self):
        """Borrowed statistics do not need any train sample."""
        split = flat_corpus([2]).with_splits(["test", "test"], imagenet_stats=True)
        assert split.normalization == NormalizationStats.imagenet()
        assert split.indices("train") == []


class TestGroupedSplit:
    """No section on both sides of the split."""

    def test_views_stay_together(self):
        """Both polarizations of a section share its tag."""
        corpus = generate_synthetic(
            default_synth_spec(num_classes=2, image_size=32, sections_per_class=5, seed=2)
        )
        split = stratified_split(corpus, train_fraction=0.6, group_by_sample=True)
        tags: dict[str, set[str]] = {}
        for sample, tag in zip(split.samples, split.splits):
            tags.setdefault(sample.sample_id, set()).add(tag)
        assert all(len(found) == 1 for found in tags.values())
        assert split.indices("test")

    def test_keeps_a_test_group(self):
        """A high fraction still leaves one group for testing."""
        split = stratified_split(flat_corpus([3, 3], views=2), train_fraction=0.95, group_by_sample=True)
        assert split_counts(split)["test"].tolist() == [2, 2]

    def test_single_group_class(self):
        """A class made of one section cannot be split by group."""
        with pytest.raises(SplitError, match="c1"):
            stratified_split(flat_corpus([3, 1], views=2), group_by_sample=True)


class TestKFold:
    """Stratified folds over the train split."""

    @pytest.fixture
    def split(self):
        return stratified_split(flat_corpus([10, 7, 5]), train_fraction=0.8)

    def test_partition_of_train(self, split):
        """Folds are disjoint and cover exactly the train samples."""
        folds = kfold(split, k=3)
        flat = [i for fold in folds for i in fold]
        assert sorted(flat) == split.indices("train")
        assert len(flat) == len(set(flat))

    def test_balanced(self, split):
        """Fold sizes, overall and per class, differ by at most one."""
        folds = kfold(split, k=3)
        sizes = [len(fold) for fold in folds]
        assert max(sizes) - min(sizes) <= 1
        per_class = np.array([split.class_counts(fold) for fold in folds])
        assert (per_class.max(axis=0) - per_class.min(axis=0)).max() <= 1

    def test_fold_view(self, split):
        """The held-out fold becomes the test split of the view."""
        folds = kfold(split, k=3, seed=1)
        view = fold_view(split, folds, held_out=2)
        assert len(view) == sum(len(f) for f in folds)
        assert len(view.indices("test")) == len(folds[2])

    def test_needs_split(self):
        """Folds are only defined on a split corpus."""
        with pytest.raises(SplitError, match="stratified_split"):
            kfold(flat_corpus([4, 4]))

    def test_k_bounds(self, split):
        """k below two or above the train size is refused."""
        with pytest.raises(SplitError):
            kfold(split, k=1)
        with pytest.raises(SplitError):
            kfold(split, k=100)
