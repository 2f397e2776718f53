from lithos.data.augment import AugmentPolicy, augment, augment_all, standardize, to_batch
from lithos.data.base import (
    Corpus,
    Magnification,
    NormalizationStats,
    Polarization,
    Sample,
    SplitTag,
)
from lithos.data.image import (
    center_crop,
    read_image,
    read_mask,
    resize_bilinear,
    resize_image,
    resize_nearest,
    rotate,
    write_image,
)
from lithos.data.scan import parse_stem, scan_corpus, write_corpus
from lithos.data.split import fold_view, kfold, split_counts, stratified_split
from lithos.data.synth import (
    InclusionRecipe,
    MatrixParams,
    SynthSpec,
    default_synth_spec,
    expected_coverage,
    generate_synthetic,
)

__all__ = [
    "AugmentPolicy",
    "Corpus",
    "InclusionRecipe",
    "Magnification",
    "MatrixParams",
    "NormalizationStats",
    "Polarization",
    "Sample",
    "SplitTag",
    "SynthSpec",
    "augment",
    "augment_all",
    "center_crop",
    "default_synth_spec",
    "expected_coverage",
    "fold_view",
    "generate_synthetic",
    "kfold",
    "parse_stem",
    "read_image",
    "read_mask",
    "resize_bilinear",
    "resize_image",
    "resize_nearest",
    "rotate",
    "scan_corpus",
    "split_counts",
    "standardize",
    "stratified_split",
    "to_batch",
    "write_corpus",
    "write_image",
]
