from __future__ import annotations

import csv

import numpy as np
import pytest
from PIL import Image

from lithos.data import default_synth_spec, generate_synthetic, parse_stem, scan_corpus, write_corpus, write_image
from lithos.errors import CorpusError


@pytest.fixture
def written(tmp_path, tiny_corpus):
    return write_corpus(tiny_corpus, tmp_path / "corpus")


class TestParseStem:
    """File-name grammar."""

    @pytest.mark.parametrize(
        "stem, expected",
        [
            ("calcite-0001__ppl__10x", ("calcite-0001", "PPL", "10x", None)),
            ("s7__xpl__2.5x__rot90", ("s7", "XPL", "2.5x", 90)),
        ],
    )
    def test_valid(self, stem, expected):
        """Sample id, polarization, magnification and rotation are recovered."""
        fields = parse_stem(stem)
        assert (
            fields["sample_id"],
            fields["polarization"],
            fields["magnification"],
            fields["rotation_index"],
        ) == expected

    @pytest.mark.parametrize("stem", ["calcite", "a__ppl__20x", "a__uv__10x", "_hidden__ppl__10x"])
    def test_invalid(self, stem):
        """Anything off-grammar is rejected."""
        assert parse_stem(stem) is None


class TestRoundTrip:
    """write_corpus followed by scan_corpus."""

    def test_images_and_masks_survive(self, written, tiny_corpus):
        """Every image and mask comes back pixel-identical under its stem."""
        scanned = scan_corpus(written)
        assert len(scanned) == len(tiny_corpus)
        assert scanned.rejects == []
        originals = {s.stem: s for s in tiny_corpus.samples}
        for sample in scanned.samples:
            original = originals[sample.stem]
            assert scanned.class_names[sample.label] == tiny_corpus.class_names[original.label]
            np.testing.assert_array_equal(sample.image, original.image)
            np.testing.assert_array_equal(sample.mask, original.mask)

    def test_stage_positions_survive(self, tmp_path):
        """Stage-rotated views keep their rotation index through the file names."""
        spec = default_synth_spec(num_classes=2, image_size=32, sections_per_class=1, seed=4, stage_angles=[0, 45])
        corpus = generate_synthetic(spec)
        scanned = scan_corpus(write_corpus(corpus, tmp_path / "staged"))
        assert len(scanned) == len(corpus) == 8
        assert sorted((s.stem, s.rotation_index) for s in scanned.samples) == sorted(
            (s.stem, s.rotation_index) for s in corpus.samples
        )
        assert {s.rotation_index for s in scanned.samples} == {0, 45}

    def test_classes_are_sorted_directories(self, written):
        """Labels follow the sorted directory names."""
        assert scan_corpus(written).class_names == ["basalt", "calcite"]

    def test_manifest(self, written, tiny_corpus):
        """The manifest lists one row per image with its mask path."""
        with open(written / "manifest.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == len(tiny_corpus)
        assert rows[0]["mask"].startswith("_masks/")
        assert {row["class"] for row in rows} == set(tiny_corpus.class_names)


class TestRejects:
    """Unusable files are reported, not fatal."""

    def test_bad_names_and_types(self, written):
        """Non-PNG files and off-grammar names land in rejects."""
        (written / "calcite" / "notes.txt").write_text("field notes")
        write_image(written / "calcite" / "untitled.png", np.zeros((4, 4, 3), dtype=np.uint8))
        scanned = scan_corpus(written)
        assert len(scanned.rejects) == 2
        assert any("notes.txt" in reason for reason in scanned.rejects)

    def test_jpeg_in_disguise(self, written):
        """A JPEG saved with a .png suffix is rejected."""
        Image.new("RGB", (8, 8)).save(written / "basalt" / "fake__ppl__10x.png", format="JPEG")
        scanned = scan_corpus(written)
        assert any("only PNG" in reason for reason in scanned.rejects)

    def test_mask_of_wrong_shape(self, written, tiny_corpus):
        """A mismatched mask is dropped and the image kept without one."""
        stem = tiny_corpus.samples[0].stem
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 2] = True
        write_image(written / "_masks" / f"{stem}.png", mask)
        scanned = scan_corpus(written)
        sample = next(s for s in scanned.samples if s.stem == stem)
        assert sample.mask is None
        assert len(scanned.rejects) == 1

    def test_missing_root(self, tmp_path):
        """A root that does not exist is a corpus error."""
        with pytest.raises(CorpusError, match="does not exist"):
            scan_corpus(tmp_path / "nowhere")

    def test_empty_class(self, written):
        """A class directory without usable images is fatal."""
        (written / "empty").mkdir()
        with pytest.raises(CorpusError, match="no usable images"):
            scan_corpus(written)
