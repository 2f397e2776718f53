from __future__ import annotations

import numpy as np
import pytest

from lithos.errors import ConfigError
from lithos.explain import DEFAULT_ANGLES, iou, rotated_view, rotation_stability, top_fraction_mask
from tests.toys import spot_image


class TestMasks:
    """Top-fraction masks and IoU."""

    def test_ceil_and_raster_ties(self):
        """ceil(0.3 * 6) = 2 pixels, ties broken by raster order."""
        mask = top_fraction_mask(np.array([[1, 3, 3], [0, 3, 2]]), 0.3)
        np.testing.assert_array_equal(mask, [[False, True, True], [False, False, False]])

    def test_at_least_one_pixel(self):
        """A tiny fraction still keeps the maximum."""
        assert top_fraction_mask(np.arange(4.0).reshape(2, 2), 0.01).sum() == 1

    def test_iou(self):
        """Intersection over union, with two empty masks counting as identical."""
        assert iou(np.array([True, False]), np.array([True, True])) == 0.5
        assert iou(np.zeros(3, dtype=bool), np.zeros(3, dtype=bool)) == 1.0


class TestRotatedView:
    """Rotated copies of the base image."""

    def test_quarter_turn(self):
        """A right-angle rotation of a square image is an exact pixel permutation."""
        image = np.random.default_rng(0).integers(0, 256, (8, 8, 3), dtype=np.uint8)
        np.testing.assert_array_equal(rotated_view(image, 90.0, 8), np.rot90(image))

    def test_resized_to_model(self):
        """Views are brought to the model resolution."""
        image = np.zeros((12, 10, 3), dtype=np.uint8)
        assert rotated_view(image, 30.0, 8).shape == (8, 8, 3)


class TestStability:
    """rotation_stability end to end on the toy network."""

    def test_single_angle(self, toy_cnn):
        """One angle is perfectly stable."""
        result = rotation_stability(toy_cnn, spot_image(8, 2, 5), angles=[0])
        assert result.stability == 1.0
        assert result.prediction_invariant

    def test_duplicate_angles(self, toy_cnn):
        """Repeating an angle reproduces the same map."""
        result = rotation_stability(toy_cnn, spot_image(8, 2, 5), angles=[0, 0], method="guided_gradcam")
        assert result.stability == 1.0

    def test_full_sweep(self, toy_cnn):
        """Twelve angles give twelve maps in the base frame, each tagged with its angle."""
        result = rotation_stability(toy_cnn, spot_image(8, 2, 5), target_class=1)
        assert result.angles == [float(a) for a in DEFAULT_ANGLES]
        assert [m.rotation_deg for m in result.maps] == result.angles
        assert all(m.target_class == 1 for m in result.maps)
        assert len(result.predictions) == 12
        assert 0.0 <= result.stability <= 1.0

    def test_default_target_is_base_prediction(self, toy_cnn):
        """Without a target the prediction on the unrotated view is used."""
        result = rotation_stability(toy_cnn, spot_image(8, 2, 5), angles=[90, 0])
        assert result.target_class == result.predictions[1]

    def test_zero_required(self, toy_cnn):
        """The angle list anchors on the unrotated frame."""
        with pytest.raises(ConfigError, match="include 0"):
            rotation_stability(toy_cnn, spot_image(8, 2, 5), angles=[30, 60])
