from __future__ import annotations

import numpy as np
import pytest

from lithos.errors import ShapeError
from lithos.explain import AttentionStack, attention_maps, explain
from lithos.tensor import Tensor


@pytest.fixture
def batch():
    return Tensor(np.random.default_rng(7).standard_normal((1, 3, 16, 16)))


def stack_with_cls_rows(*rows) -> AttentionStack:
    """One layer whose heads have the given CLS rows; other rows are uniform."""
    tokens = len(rows[0])
    matrices = np.full((1, len(rows), tokens, tokens), 1.0 / tokens)
    for head, row in enumerate(rows):
        matrices[0, head, 0] = row
    return AttentionStack(matrices, grid=int(np.sqrt(tokens - 1)))


class TestCapture:
    """attention_maps on a tiny transformer."""

    def test_stack_geometry(self, small_vit, batch):
        """Layers x heads x tokens x tokens, rows summing to 1."""
        stack = attention_maps(small_vit, batch)
        assert (stack.layers, stack.heads, stack.tokens, stack.grid) == (2, 2, 17, 4)
        assert stack.max_row_error() < 1e-5
        assert stack.prediction in (0, 1)

    def test_explain_selects_block_and_head(self, small_vit, batch):
        """A chosen block and head are recorded on the map."""
        saliency = explain(small_vit, batch, "attention", layer=0, head=1)
        assert saliency.shape == (16, 16)
        assert (saliency.layer, saliency.head) == ("blocks.0", 1)
        assert saliency.target_class == attention_maps(small_vit, batch).prediction

    def test_default_is_last_block_averaged(self, small_vit, batch):
        """Without options the last block is used and heads are averaged."""
        saliency = explain(small_vit, batch, "attention")
        assert (saliency.layer, saliency.head) == ("blocks.1", None)


class TestStack:
    """Derived quantities on hand-made attention."""

    def test_cls_grid_raster_order(self):
        """Patch tokens fill the grid row by row."""
        stack = stack_with_cls_rows([0.0, 0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(stack.cls_grid(0, 0), [[0.1, 0.2], [0.3, 0.4]])
        np.testing.assert_allclose(stack.saliency().values, [[0.0, 1 / 3], [2 / 3, 1.0]])

    def test_head_average(self):
        """Mirrored heads average to a flat map."""
        stack = stack_with_cls_rows([0.0, 0.4, 0.3, 0.2, 0.1], [0.0, 0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(stack.cls_grid(0), np.full((2, 2), 0.25))
        np.testing.assert_allclose(stack.cls_grid(0, 0), [[0.4, 0.3], [0.2, 0.1]])

    def test_entropy(self):
        """Uniform attention over four patches has entropy log 4."""
        stack = stack_with_cls_rows([0.2] * 5)
        assert stack.entropy(0, 0) == pytest.approx(np.log(4))
        np.testing.assert_allclose(stack.layer_entropy(), [np.log(4)])

    def test_rollout(self):
        """Uniform attention rolls out uniformly; a pure residual rolls out to nothing."""
        stack = stack_with_cls_rows([0.2] * 5)
        np.testing.assert_allclose(stack.rollout(), np.full((2, 2), 0.1))
        np.testing.assert_allclose(stack.rollout(residual=1.0), np.zeros((2, 2)))

    def test_no_prediction(self):
        """Maps from a stack without a prediction carry target -1."""
        assert stack_with_cls_rows([0.2] * 5).saliency().target_class == -1

    def test_token_count_must_match_grid(self):
        """T must be grid squared plus the class token."""
        with pytest.raises(ShapeError):
            AttentionStack(np.full((1, 1, 6, 6), 1 / 6), grid=2)
