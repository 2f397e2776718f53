from __future__ import annotations

import csv
import logging
import re
from os import PathLike
from pathlib import Path
from typing import Optional

import numpy as np

from lithos.data.base import Corpus, Sample
from lithos.data.image import read_image, read_mask, write_image
from lithos.errors import CorpusError, DataError

logger = logging.getLogger(__name__)

MASK_DIR = "_masks"
MANIFEST = "manifest.csv"
MANIFEST_HEADER = (
    "path",
    "class",
    "label",
    "sample_id",
    "polarization",
    "magnification",
    "rotation",
    "mask",
)

STEM = re.compile(
    r"^(?P<sample_id>[^_].*?)__(?P<polarization>ppl|xpl)__(?P<magnification>2\.5x|10x)"
    r"(?:__rot(?P<rotation>\d+))?$"
)


def parse_stem(stem: str) -> Optional[dict]:
    match = STEM.match(stem)
    if match is None:
        return None
    rotation = match["rotation"]
    return {
        "sample_id": match["sample_id"],
        "polarization": match["polarization"].upper(),
        "magnification": match["magnification"],
        "rotation_index": int(rotation) if rotation is not None else None,
    }


def scan_corpus(root: str | PathLike[str]) -> Corpus:
    """Load ``root/<class>/<stem>.png`` with optional ``root/_masks/<stem>.png``.

    Classes are the sorted sub-directories (those starting with ``_`` are
    reserved); files are read in sorted order. Names that do not parse,
    non-PNG files and unusable masks are collected in ``Corpus.rejects``.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"Corpus root {root} does not exist or is not a directory.")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("_"))
    if not class_dirs:
        raise CorpusError(f"Corpus root {root} has no class directories.")
    mask_dir = root / MASK_DIR

    samples: list[Sample] = []
    rejects: list[str] = []

    def reject(path: Path, reason: str) -> None:
        rejects.append(f"{path.relative_to(root)}: {reason}")
        logger.warning("Rejected %s: %s", path, reason)

    for label, class_dir in enumerate(class_dirs):
        accepted = 0
        for path in sorted(p for p in class_dir.iterdir() if p.is_file()):
            if path.suffix.lower() != ".png":
                reject(path, "not a .png file")
                continue
            fields = parse_stem(path.stem)
            if fields is None:
                reject(path, "file name does not match <sample_id>__<ppl|xpl>__<2.5x|10x>[__rot<deg>]")
                continue
            try:
                image = read_image(path)
            except DataError as error:
                reject(path, str(error))
                continue

            mask = None
            mask_path = mask_dir / f"{path.stem}.png"
            if mask_path.is_file():
                try:
                    candidate = read_mask(mask_path)
                except DataError as error:
                    reject(mask_path, str(error))
                else:
                    if candidate.shape != image.shape[:2]:
                        reject(mask_path, f"mask shape {candidate.shape} differs from image {image.shape[:2]}")
                    elif not candidate.any():
                        reject(mask_path, "mask is empty")
                    else:
                        mask = candidate

            samples.append(Sample(image=image, label=label, mask=mask, **fields))
            accepted += 1
        if accepted == 0:
            raise CorpusError(
                f"Class directory {class_dir} holds no usable images; remove it or add PNGs "
                f"named <sample_id>__<ppl|xpl>__<2.5x|10x>.png."
            )

    logger.info(
        "Scanned %d images in %d classes from %s (%d rejects)",
        len(samples),
        len(class_dirs),
        root,
        len(rejects),
    )
    return Corpus(
        samples=samples,
        class_names=[p.name for p in class_dirs],
        rejects=rejects,
    )


def write_corpus(corpus: Corpus, root: str | PathLike[str]) -> Path:
    """Write a corpus in the layout ``scan_corpus`` reads, plus ``manifest.csv``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    seen: set[str] = set()
    rows = []
    for sample in corpus.samples:
        class_name = corpus.class_names[sample.label]
        stem = sample.stem
        if stem in seen:
            raise CorpusError(f"Two samples share the file stem '{stem}'; sample ids must be unique per view.")
        seen.add(stem)
        path = write_image(root / class_name / f"{stem}.png", sample.image)
        mask_rel = ""
        if sample.mask is not None:
            mask_path = write_image(root / MASK_DIR / f"{stem}.png", np.asarray(sample.mask, dtype=bool))
            mask_rel = mask_path.relative_to(root).as_posix()
        rows.append(
            (
                path.relative_to(root).as_posix(),
                class_name,
                sample.label,
                sample.sample_id,
                sample.polarization,
                sample.magnification,
                "" if sample.rotation_index is None else sample.rotation_index,
                mask_rel,
            )
        )
    with open(root / MANIFEST, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    logger.info("Wrote %d images to %s", len(rows), root)
    return root
