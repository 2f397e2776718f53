from __future__ import annotations

import logging

import numpy as np

from lithos.data.base import Corpus, SplitTag
from lithos.errors import SplitError
from lithos.utils import keyed_rng, round_half_up

logger = logging.getLogger(__name__)


def _members(corpus: Corpus, label: int, indices: list[int]) -> list[int]:
    return [i for i in indices if corpus.samples[i].label == label]


def stratified_split(
    corpus: Corpus,
    train_fraction: float = 0.8,
    seed: int = 0,
    group_by_sample: bool = False,
    imagenet_stats: bool = False,
) -> Corpus:
    """Tag every sample train or test, class by class.

    Each class is shuffled with its own stream keyed by ``(seed, label)`` and
    its first ``floor(fraction * size + 0.5)`` members go to train. In group
    mode whole ``sample_id`` groups are dealt until the class reaches that
    target, so no section appears on both sides.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise SplitError(f"train_fraction must be in (0, 1], got {train_fraction}.")
    tags: list[SplitTag] = ["test"] * len(corpus)
    everything = corpus.indices()

    for label in range(corpus.num_classes):
        members = _members(corpus, label, everything)
        if not members:
            continue
        target = int(round_half_up(train_fraction * len(members)))
        rng = keyed_rng(seed, label)
        if not group_by_sample:
            for rank, position in enumerate(rng.permutation(len(members))):
                if rank < target:
                    tags[members[position]] = "train"
            continue

        groups: dict[str, list[int]] = {}
        for i in members:
            groups.setdefault(corpus.samples[i].sample_id, []).append(i)
        if len(groups) < 2:
            raise SplitError(
                f"Class '{corpus.class_names[label]}' has {len(groups)} distinct sample_id(s); "
                f"group mode needs at least 2 to populate both splits."
            )
        names = list(groups)
        order = [names[p] for p in rng.permutation(len(names))]
        taken = 0
        for position, name in enumerate(order):
            # keep at least one group for test unless everything goes to train
            last = position == len(order) - 1
            if taken < target and not (last and train_fraction < 1.0 and taken > 0):
                for i in groups[name]:
                    tags[i] = "train"
                taken += len(groups[name])

    split = corpus.with_splits(tags, imagenet_stats=imagenet_stats)
    logger.debug(
        "Split %d samples: %d train / %d test (seed %d, group=%s)",
        len(corpus),
        len(split.indices("train")),
        len(split.indices("test")),
        seed,
        group_by_sample,
    )
    return split


def kfold(corpus: Corpus, k: int = 3, seed: int = 0) -> list[list[int]]:
    """Stratified, disjoint folds over the train-tagged samples.

    Returns ``k`` sorted lists of corpus indices. Each class is shuffled with
    the stream ``(seed, k, label)`` and dealt round-robin; the starting fold
    carries over between classes so fold sizes differ by at most one.
    """
    if k < 2:
        raise SplitError(f"kfold needs k >= 2, got {k}.")
    if corpus.splits is None:
        raise SplitError("kfold operates on the train split; call stratified_split() first.")
    train = corpus.indices("train")
    if len(train) < k:
        raise SplitError(f"Cannot build {k} folds from {len(train)} train samples.")

    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for label in range(corpus.num_classes):
        members = _members(corpus, label, train)
        rng = keyed_rng(seed, k, label)
        for rank, position in enumerate(rng.permutation(len(members))):
            folds[(offset + rank) % k].append(members[position])
        offset = (offset + len(members)) % k
    return [sorted(fold) for fold in folds]


def fold_view(corpus: Corpus, folds: list[list[int]], held_out: int, imagenet_stats: bool = False) -> Corpus:
    """Train on every fold but ``held_out``, test on ``held_out``; other samples are dropped."""
    if not 0 <= held_out < len(folds):
        raise SplitError(f"held_out must be in [0, {len(folds)}), got {held_out}.")
    indices = sorted(i for fold in folds for i in fold)
    held = set(folds[held_out])
    tags: list[SplitTag] = ["test" if i in held else "train" for i in indices]
    subset = corpus.subset(indices)
    return subset.with_splits(tags, imagenet_stats=imagenet_stats)


def split_counts(corpus: Corpus) -> dict[str, np.ndarray]:
    return {
        tag: np.array(corpus.class_counts(corpus.indices(tag)), dtype=np.int64)
        for tag in ("train", "test")
    }
