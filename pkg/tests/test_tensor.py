"""Unit tests for the tensor engine."""

import threading

import numpy as np
import pytest

from src import tensor as tf
from src.tensor import (
    ComputationTrace, ContractError, DimensionError, Tensor, backward, concat, matmul,
    no_grad, numerical_gradient, slice_axis, softmax,
)


def _check_gradient(fn, *tensors, tolerance=1e-6):
    """Compare the tape gradient of fn() with central differences for each tensor."""
    for t in tensors:
        t.zero_grad()
    backward(fn())
    for t in tensors:
        expected = numerical_gradient(fn, t)
        np.testing.assert_allclose(t.grad, expected, rtol=tolerance, atol=tolerance)


class TestMatmul:
    """Test matrix products."""

    def test_small_example(self):
        """Test a 2x2 product worked by hand."""
        result = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5, 6], [7, 8]]))
        assert result.values.tolist() == [[19, 22], [43, 50]]

    def test_matches_triple_loop(self):
        """Test against an explicit triple loop on random operands."""
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 3))
        expected = np.zeros((4, 3))
        for i in range(4):
            for j in range(3):
                for k in range(5):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).values, expected, atol=1e-12)

    def test_batched_operands(self):
        """Test broadcasting over a leading batch axis."""
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))
        result = matmul(Tensor(a), Tensor(b))
        assert result.shape == (2, 3, 5)
        np.testing.assert_allclose(result.values[1], a[1] @ b)

    def test_inner_mismatch_names_both_shapes(self):
        """Test that mismatched inner extents raise DimensionError."""
        with pytest.raises(DimensionError) as exc_info:
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        assert "(2, 3)" in str(exc_info.value)
        assert "(4, 2)" in str(exc_info.value)

    def test_vector_operand_rejected(self):
        """Test that 1-D operands are rejected."""
        with pytest.raises(DimensionError):
            matmul(Tensor([1.0, 2.0]), Tensor(np.ones((2, 2))))


class TestSoftmax:
    """Test the scaled softmax."""

    def test_uniform_input(self):
        """Test that equal inputs give a uniform distribution."""
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).values, [0.5, 0.5])

    def test_large_logits_do_not_overflow(self):
        """Test max-stabilization on large values."""
        result = softmax(Tensor([1000.0, 0.0])).values
        assert np.all(np.isfinite(result))
        assert result[0] == pytest.approx(1.0)
        assert result[1] < 1e-300

    def test_scale(self):
        """Test that the scale multiplies the inputs before normalizing."""
        result = softmax(Tensor([0.0, np.log(2.0) * 2]), scale=0.5).values
        np.testing.assert_allclose(result, [1 / 3, 2 / 3])

    def test_rows_sum_to_one(self):
        """Test normalization along the last axis of a matrix."""
        rng = np.random.default_rng(1)
        result = softmax(Tensor(rng.standard_normal((4, 7)) * 10)).values
        np.testing.assert_allclose(result.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_empty_input(self):
        """Test that an empty vector raises DimensionError."""
        with pytest.raises(DimensionError):
            softmax(Tensor(np.zeros(0)))

    def test_non_positive_scale(self):
        """Test that the scale must be positive."""
        with pytest.raises(ContractError):
            softmax(Tensor([1.0, 2.0]), scale=0.0)


class TestBackward:
    """Test reverse-mode differentiation."""

    def test_product_rule(self):
        """Test d(x*y)/dx = y on scalars."""
        x = Tensor(3.0, requires_grad=True)
        y = Tensor(4.0, requires_grad=True)
        backward(x * y)
        assert x.grad == 4.0
        assert y.grad == 3.0

    def test_shared_input_accumulates(self):
        """Test that a tensor used twice receives both contributions."""
        x = Tensor(2.0, requires_grad=True)
        backward(x * x + x)
        assert x.grad == pytest.approx(5.0)

    def test_repeated_backward_accumulates(self):
        """Test that gradients add up until zero_grad."""
        x = Tensor(1.5, requires_grad=True)
        backward(x * 2.0)
        backward(x * 2.0)
        assert x.grad == pytest.approx(4.0)
        x.zero_grad()
        assert x.grad is None

    def test_broadcast_gradient_is_reduced(self):
        """Test that a broadcast bias receives the summed gradient."""
        x = Tensor(np.ones((3, 2)))
        bias = Tensor([1.0, 2.0], requires_grad=True)
        backward(tf.sum(x + bias))
        np.testing.assert_allclose(bias.grad, [3.0, 3.0])

    def test_non_scalar_loss_rejected(self):
        """Test that backward needs a scalar."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * 2.0)

    def test_no_grad_records_nothing(self):
        """Test that operations inside no_grad are not traced."""
        x = Tensor(2.0, requires_grad=True)
        with no_grad():
            y = x * 3.0
        assert y.is_leaf
        assert not y.requires_grad

    def test_no_grad_is_thread_local(self):
        """Test that no_grad on one thread leaves other threads recording."""
        x = Tensor(2.0, requires_grad=True)
        recorded = []

        def worker():
            recorded.append((x * 3.0).requires_grad)

        with no_grad():
            thread = threading.Thread(target=worker)
            thread.start()
            thread.join()
        assert recorded == [True]

    def test_trace_is_topological(self):
        """Test that trace entries come in creation order."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = tf.exp(x)
        z = tf.sum(y * x)
        trace = ComputationTrace.collect(z)
        assert trace.ops() == ["exp", "mul", "sum"]
        assert len(trace) == 3


class TestGradientChecks:
    """Compare every primitive's gradient with central differences."""

    def setup_method(self):
        """Set up random operands."""
        self.rng = np.random.default_rng(7)
        self.a = Tensor(self.rng.standard_normal((3, 4)), requires_grad=True)
        self.b = Tensor(self.rng.standard_normal((4, 2)), requires_grad=True)
        self.w = Tensor(self.rng.standard_normal((3, 4)))

    def test_matmul(self):
        """Test the matmul gradient for both operands."""
        _check_gradient(lambda: tf.sum(tf.mul(matmul(self.a, self.b), 1.5)), self.a, self.b)

    def test_elementwise(self):
        """Test add, sub and mul together."""
        _check_gradient(lambda: tf.sum(tf.mul(self.a - self.w, self.a + self.w)), self.a)

    def test_transpose_and_reshape(self):
        """Test layout operations."""
        _check_gradient(
            lambda: tf.sum(tf.mul(tf.reshape(tf.transpose(self.a), (2, 6)),
                                  Tensor(np.arange(12.0).reshape(2, 6)))),
            self.a)

    def test_mean_and_sum_along_axis(self):
        """Test reductions along one axis."""
        _check_gradient(lambda: tf.sum(tf.mul(tf.mean(self.a, axis=0), Tensor([1.0, -2, 3, 4]))),
                        self.a)

    def test_exp_and_log(self):
        """Test exp and log."""
        _check_gradient(lambda: tf.sum(tf.log(tf.exp(self.a) + 1.0)), self.a)

    def test_relu(self):
        """Test relu away from the kink."""
        x = Tensor([[-1.0, 0.5], [2.0, -0.3]], requires_grad=True)
        _check_gradient(lambda: tf.sum(tf.mul(tf.relu(x), Tensor([[1.0, 2.0], [3.0, 4.0]]))), x)

    def test_sqrt(self):
        """Test sqrt on positive inputs."""
        x = Tensor([[0.5, 2.0], [3.0, 4.5]], requires_grad=True)
        _check_gradient(lambda: tf.sum(tf.sqrt(x)), x)

    def test_sqrt_at_zero_has_zero_gradient(self):
        """Test the convention at zero output."""
        x = Tensor([0.0, 4.0], requires_grad=True)
        backward(tf.sum(tf.sqrt(x)))
        np.testing.assert_allclose(x.grad, [0.0, 0.25])

    def test_softmax(self):
        """Test the scaled softmax gradient."""
        weights = Tensor(self.rng.standard_normal((3, 4)))
        _check_gradient(lambda: tf.sum(tf.mul(softmax(self.a, scale=0.7), weights)), self.a)

    def test_log_softmax(self):
        """Test log_softmax."""
        weights = Tensor(self.rng.standard_normal((3, 4)))
        _check_gradient(lambda: tf.sum(tf.mul(tf.log_softmax(self.a), weights)), self.a)

    def test_concat_and_slice(self):
        """Test concat and slice_axis."""
        c = Tensor(self.rng.standard_normal((3, 2)), requires_grad=True)
        _check_gradient(
            lambda: tf.sum(tf.mul(slice_axis(concat([self.a, c], axis=1), 1, 2, 5), 2.0)),
            self.a, c)

    def test_pick(self):
        """Test row-wise picking."""
        _check_gradient(lambda: tf.sum(tf.pick(self.a, [0, 3, 3])), self.a)


class TestConcatSlice:
    """Test concat and slice_axis."""

    def test_round_trip_is_exact(self):
        """Test that slicing a concatenation returns the parts bit for bit."""
        rng = np.random.default_rng(2)
        parts = [Tensor(rng.standard_normal((2, n))) for n in (1, 3, 2)]
        joined = concat(parts, axis=-1)
        start = 0
        for part in parts:
            stop = start + part.shape[-1]
            assert np.array_equal(slice_axis(joined, -1, start, stop).values, part.values)
            start = stop

    def test_concat_mismatch(self):
        """Test that concatenating incompatible shapes raises DimensionError."""
        with pytest.raises(DimensionError):
            concat([Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2)))], axis=1)

    def test_concat_empty_list(self):
        """Test that an empty list is rejected."""
        with pytest.raises(DimensionError):
            concat([])

    def test_slice_out_of_range(self):
        """Test that an invalid range is rejected."""
        with pytest.raises(DimensionError):
            slice_axis(Tensor(np.ones(4)), 0, 2, 6)

    def test_item_requires_single_element(self):
        """Test Tensor.item on a vector."""
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()
