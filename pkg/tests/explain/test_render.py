from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from lithos.data import read_image
from lithos.explain import SaliencyMap, colormap, corpus_pointing_score, output_name, pointing_game, render, write_rendered


def saliency(values) -> SaliencyMap:
    return SaliencyMap(values=np.asarray(values, dtype=np.float64), method="gradcam", target_class=0, model_id="toy")


class TestColormap:
    """Blue-green-red ramp."""

    def test_anchor_points(self):
        """0 is blue, 0.5 is green-ish grey, 1 is red."""
        np.testing.assert_array_equal(
            colormap(np.array([0.0, 0.5, 1.0])),
            [[0, 0, 255], [128, 255, 128], [255, 0, 0]],
        )


class TestRender:
    """Overlay, masked and raw renderings."""

    def test_overlay_extremes(self):
        """alpha 0 is the image, alpha 1 the colormap."""
        image = np.full((2, 2, 3), 90, dtype=np.uint8)
        values = saliency([[0.0, 1.0], [0.5, 0.25]])
        np.testing.assert_array_equal(render(image, values, "overlay", alpha=0.0), image)
        np.testing.assert_array_equal(render(image, values, "overlay", alpha=1.0), colormap(values.values))

    def test_masked(self):
        """Pixels below the threshold are blacked out."""
        image = np.full((1, 2, 3), 200, dtype=np.uint8)
        out = render(image, saliency([[0.2, 0.8]]), "masked", threshold=0.5)
        np.testing.assert_array_equal(out[0, 0], [0, 0, 0])
        np.testing.assert_array_equal(out[0, 1], [200, 200, 200])

    def test_map_resized_to_image(self):
        """A coarse map is stretched over the image."""
        out = render(np.zeros((6, 6, 3), dtype=np.uint8), saliency([[0.0, 1.0], [1.0, 0.0]]), "raw")
        assert out.shape == (6, 6, 3)

    def test_invalid_arguments(self):
        """Bad alpha values and modes are refused."""
        image = np.zeros((2, 2, 3), dtype=np.uint8)
        with pytest.raises(ValueError, match="alpha"):
            render(image, saliency(np.zeros((2, 2))), "overlay", alpha=1.5)
        with pytest.raises(ValueError, match="render mode"):
            render(image, saliency(np.zeros((2, 2))), "contour")


class TestOutputs:
    """File names and written artefacts."""

    def test_names(self):
        """Layer/head and rotation tags appear only when set."""
        assert output_name("s", "gradcam", 1, "overlay") == "s__gradcam__c1__overlay.png"
        assert output_name("s", "attention", 0, "raw", layer=3) == "s__attention__c0__L3Havg__raw.png"
        assert output_name("s", "attention", 0, "raw", layer=3, head=2, rotation=30.0) == (
            "s__attention__c0__L3H2__rot30__raw.png"
        )

    def test_write_rendered(self, tmp_path):
        """Each rendering is a PNG of the image's size, described by one sidecar."""
        image = np.full((4, 4, 3), 60, dtype=np.uint8)
        paths = write_rendered(tmp_path, "stem", image, saliency(np.eye(4)), ("overlay", "raw"))
        assert [p.name for p in paths] == ["stem__gradcam__c0__overlay.png", "stem__gradcam__c0__raw.png"]
        assert read_image(paths[0]).shape == (4, 4, 3)
        notes = (tmp_path / "stem__gradcam__c0.txt").read_text()
        assert "method=gradcam" in notes
        assert "alpha=0.5" in notes

    def test_values_must_be_normalized(self):
        """Maps outside [0, 1] are rejected."""
        with pytest.raises(ValidationError):
            saliency([[0.0, 2.0]])


class TestPointingGame:
    """First maximum inside the mask."""

    def test_peak_inside(self):
        """The argmax pixel decides; masks are resized to the map."""
        values = np.zeros((4, 4))
        values[2, 1] = 1.0
        assert pointing_game(saliency(values), np.array([[False, False], [True, False]]))
        assert not pointing_game(saliency(values), np.array([[True, True], [False, True]]))

    def test_uniform_map_points_at_origin(self):
        """A flat map points at pixel (0, 0)."""
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = True
        assert pointing_game(np.zeros((3, 3)), mask)
        assert not pointing_game(np.zeros((3, 3)), ~mask)

    def test_corpus_score(self):
        """The score is the hit rate."""
        values = np.zeros((2, 2))
        hit, miss = np.array([[True, False], [False, False]]), np.array([[False, True], [False, False]])
        assert corpus_pointing_score([values, values], [hit, miss]) == 0.5
        with pytest.raises(ValueError):
            corpus_pointing_score([values], [hit, miss])
