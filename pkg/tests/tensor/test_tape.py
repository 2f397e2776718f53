"""Tape recording, reverse sweeps and their failure modes."""

from __future__ import annotations

import numpy as np
import pytest

from lithos.errors import RetentionError, ShapeError, TapeConsumedError
from lithos.tensor import Tape, Tensor, active_tape, functional as F, guided_relu, no_tape


class TestTensor:
    """Tensors are immutable float32 buffers."""

    def test_constructor_copies_and_freezes(self):
        """The caller's array stays writable and later edits do not leak in."""
        source = np.arange(4.0)
        t = Tensor(source)
        source[0] = 99.0

        assert t.numpy()[0] == 0.0
        assert t.numpy().dtype == np.float32
        with pytest.raises(ValueError):
            t.numpy()[0] = 1.0

    def test_ops_do_not_mutate_inputs(self):
        """Arithmetic returns new tensors and leaves operands untouched."""
        a = Tensor([1.0, 2.0])
        b = Tensor([3.0, 4.0])
        before = a.numpy().copy()

        c = a * b + a

        np.testing.assert_array_equal(a.numpy(), before)
        np.testing.assert_array_equal(c.numpy(), [4.0, 10.0])

    def test_item_needs_single_element(self):
        """item() refuses multi-element tensors."""
        assert Tensor([[2.5]]).item() == 2.5
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()


class TestRecording:
    """Only ops that need gradients and run under an active tape are recorded."""

    def test_records_in_execution_order(self):
        """Entries follow the forward order."""
        x = Tensor([1.0, -2.0], requires_grad=True)
        with Tape() as tape:
            y = F.relu(x * 2.0)
            z = y.sum()

        assert [entry.op for entry in tape.entries] == ["mul", "relu", "sum"]
        assert z.requires_grad

    def test_constants_are_not_recorded(self):
        """Ops on tensors without requires_grad leave the tape empty."""
        with Tape() as tape:
            Tensor([1.0]) + Tensor([2.0])
        assert len(tape) == 0

    def test_no_tape_suspends_recording(self):
        """no_tape() hides the active tape and restores it afterwards."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            with no_tape():
                assert active_tape.get() is None
                x * 3.0
            assert active_tape.get() is tape
            x * 3.0
        assert len(tape) == 1

    def test_nested_tapes_restore_outer(self):
        """Leaving an inner tape reactivates the outer one."""
        with Tape() as outer:
            with Tape() as inner:
                assert active_tape.get() is inner
            assert active_tape.get() is outer
        assert active_tape.get() is None


class TestBackward:
    """Reverse sweeps return gradients keyed by tensor."""

    def test_product_rule(self):
        """d(a*b)/da = b and d(a*b)/db = a."""
        a = Tensor([2.0, 3.0], requires_grad=True)
        b = Tensor([5.0, 7.0], requires_grad=True)
        with Tape() as tape:
            loss = (a * b).sum()
        grads = tape.backward(loss)

        np.testing.assert_allclose(grads[a].numpy(), [5.0, 7.0])
        np.testing.assert_allclose(grads[b].numpy(), [2.0, 3.0])

    def test_reused_tensor_accumulates(self):
        """A tensor used twice receives the sum of both paths."""
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = (x * x + x).sum()
        np.testing.assert_allclose(tape.backward(loss)[x].numpy(), [7.0])

    def test_broadcast_gradient_is_reduced(self):
        """A broadcast operand gets its gradient summed back to its own shape."""
        x = Tensor(np.ones((3, 4)), requires_grad=True)
        bias = Tensor(np.zeros((1, 4)), requires_grad=True)
        with Tape() as tape:
            loss = (x + bias).sum()
        grads = tape.backward(loss)
        assert grads[bias].shape == (1, 4)
        np.testing.assert_allclose(grads[bias].numpy(), np.full((1, 4), 3.0))

    def test_unused_tensor_gets_zero(self):
        """Tensors listed in wrt that never took part receive zeros."""
        x = Tensor([1.0], requires_grad=True)
        unused = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = (x * 2.0).sum()
        grads = tape.backward(loss, wrt=[unused])
        np.testing.assert_array_equal(grads.of(unused).numpy(), np.zeros((2, 2)))

    def test_frozen_leaf_has_no_gradient(self):
        """Leaves without requires_grad are left out of the result."""
        frozen = Tensor([1.0, 2.0])
        x = Tensor([1.0, 1.0], requires_grad=True)
        with Tape() as tape:
            loss = (frozen * x).sum()
        grads = tape.backward(loss)
        assert frozen not in grads
        np.testing.assert_allclose(grads[x].numpy(), [1.0, 2.0])

    def test_tape_is_single_use(self):
        """A second sweep, or recording after one, is refused."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            loss = (x * 2.0).sum()
        tape.backward(loss)
        with pytest.raises(TapeConsumedError):
            tape.backward(loss)
        with pytest.raises(TapeConsumedError):
            with tape:
                x * 2.0

    def test_backward_needs_scalar(self):
        """Non-scalar roots are rejected."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
        with pytest.raises(ShapeError):
            tape.backward(y)


class TestIntermediateGradients:
    """grad_of_output_wrt targets retained intermediates."""

    def test_gradient_of_retained_intermediate(self):
        """d(sum(h^2))/dh = 2h for a retained h."""
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            h = (x * 2.0).retain_grad()
            score = (h * h).sum()
        grad = tape.grad_of_output_wrt(h, score)
        np.testing.assert_allclose(grad.numpy(), 2.0 * h.numpy())

    def test_unretained_intermediate_is_rejected(self):
        """Without retain_grad() the request fails with a remedy."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            h = x * 2.0
            score = h.sum()
        with pytest.raises(RetentionError, match="retain_grad"):
            tape.grad_of_output_wrt(h, score)


class TestGuidedScope:
    """The guided ReLU rule only applies inside its block."""

    def test_guided_rule_blocks_negative_upstream(self):
        """Guided backward zeroes negative upstream gradients, plain ReLU passes them."""
        x = Tensor([1.0, 2.0, -1.0], requires_grad=True)
        weights = Tensor([1.0, -1.0, 1.0])

        with guided_relu(), Tape() as guided:
            loss = (F.relu(x) * weights).sum()
        guided_grad = guided.backward(loss)[x].numpy()

        with Tape() as plain:
            loss = (F.relu(x) * weights).sum()
        plain_grad = plain.backward(loss)[x].numpy()

        np.testing.assert_array_equal(guided_grad, [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(plain_grad, [1.0, -1.0, 0.0])

    def test_scope_does_not_leak(self):
        """After the block, ReLU records the ordinary rule again."""
        x = Tensor([1.0], requires_grad=True)
        with guided_relu():
            pass
        with Tape() as tape:
            F.relu(x)
        counts = tape.op_counts()
        assert counts["relu"] == 1
        assert counts["guided_relu"] == 0
