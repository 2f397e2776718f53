import numpy as np
import pytest

from lithos.tensor import Tape, Tensor, functional as F
from tests.oracles import naive_conv2d


class TestConvolution:
    """
    im2col + GEMM against the nested-loop reference, same input and weights.
    """

    @pytest.mark.baseline
    @pytest.mark.benchmark(group="conv3x3")
    def test_naive_conv(self, benchmark, conv_case):
        """Nested loops over batch, filters and output positions."""
        x, weight = conv_case
        result = benchmark(naive_conv2d, x, weight, None, 1, 1)
        assert result.shape == (2, 16, 16, 16)

    @pytest.mark.benchmark(group="conv3x3")
    def test_im2col_conv(self, benchmark, conv_case):
        """Forward pass only, no tape."""
        x, weight = conv_case
        result = benchmark(lambda: F.conv2d(Tensor(x), Tensor(weight), padding=1))
        np.testing.assert_allclose(result.numpy(), naive_conv2d(x, weight, padding=1), rtol=1e-4, atol=1e-4)

    @pytest.mark.benchmark(group="conv3x3-backward")
    def test_im2col_conv_backward(self, benchmark, conv_case):
        """Forward plus reverse sweep to input and weights."""
        x, weight = conv_case

        def step():
            leaf, kernel = Tensor(x, requires_grad=True), Tensor(weight, requires_grad=True)
            with Tape() as tape:
                loss = F.conv2d(leaf, kernel, padding=1).sum()
            return tape.backward(loss)[kernel]

        result = benchmark(step)
        assert result.shape == weight.shape
