"""
Tests for lift.tensor: Tensor values and the gradient tape.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from lift import config, ops
from lift.errors import LiftError, NonFiniteError
from lift.tensor import GradTape, Tensor, active_tape, as_tensor, float64_mode


class TestTensor:
    """Construction and storage."""

    def test_default_storage_is_float32(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.dtype == np.float32
        assert t.shape == (2, 2)
        assert t.size == 4

    def test_float64_mode(self):
        """The 64-bit mode only affects tensors created inside it."""
        with float64_mode():
            inner = Tensor([1.0])
        outer = Tensor([1.0])
        assert inner.dtype == np.float64
        assert outer.dtype == np.float32

    def test_buffer_is_read_only(self):
        t = Tensor(np.zeros(3))
        with pytest.raises(ValueError):
            t.data[0] = 1.0

    def test_construction_copies(self):
        """Mutating the source array does not change the tensor."""
        src = np.ones(3)
        t = Tensor(src)
        src[0] = 7.0
        assert t.data[0] == 1.0

    def test_numpy_returns_writable_copy(self):
        t = Tensor([1.0, 2.0])
        out = t.numpy()
        out[0] = 9.0
        assert t.data[0] == 1.0

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan])

    def test_inf_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([np.inf])

    def test_unchecked_mode_allows_nan(self):
        with config.override(check_finite=False):
            t = Tensor([np.nan])
        assert np.isnan(t.data[0])

    def test_item(self):
        assert Tensor(np.array(2.5)).item() == 2.5

    def test_item_requires_single_element(self):
        with pytest.raises(LiftError, match="single-element"):
            Tensor([1.0, 2.0]).item()

    def test_as_tensor_passthrough(self):
        t = Tensor([1.0])
        assert as_tensor(t) is t

    def test_repr_mentions_shape(self):
        assert "(2,)" in repr(Tensor([1.0, 2.0], name="x"))


class TestGradTape:
    """Reverse-mode gradients."""

    def test_no_tape_records_nothing(self):
        x = Tensor([1.0, 2.0])
        y = ops.sum(ops.mul(x, x))
        assert not y.requires_grad
        assert active_tape() is None

    def test_square_gradient(self):
        x0 = np.array([1.0, 2.0, 3.0])
        with GradTape() as tape:
            x = tape.watch(x0)
            y = ops.sum(x * x)
        np.testing.assert_allclose(tape.gradient(y, x), 2 * x0)

    def test_shared_input_accumulates(self):
        """A value used twice gets the sum of both contributions."""
        x0 = np.array([0.5, -1.0])
        with GradTape() as tape:
            x = tape.watch(x0)
            y = ops.sum(ops.add(ops.mul(x, x), x))
        np.testing.assert_allclose(tape.gradient(y, x), 2 * x0 + 1)

    def test_unused_input_gets_exact_zero(self):
        with GradTape() as tape:
            a = tape.watch(np.ones(3))
            b = tape.watch(np.ones((2, 2)))
            y = ops.sum(a)
        grads = tape.gradient(y, {"a": a, "b": b})
        assert np.array_equal(grads["b"], np.zeros((2, 2), dtype=np.float32))
        assert np.array_equal(grads["a"], np.ones(3, dtype=np.float32))

    def test_gradient_mirrors_sequence(self):
        with GradTape() as tape:
            a = tape.watch(np.ones(2))
            b = tape.watch(np.full(2, 3.0))
            y = ops.sum(ops.mul(a, b))
        ga, gb = tape.gradient(y, [a, b])
        np.testing.assert_allclose(ga, [3.0, 3.0])
        np.testing.assert_allclose(gb, [1.0, 1.0])

    def test_target_must_be_scalar(self):
        with GradTape() as tape:
            x = tape.watch(np.ones(3))
            y = ops.scale(x, 2.0)
        with pytest.raises(LiftError, match="scalar"):
            tape.gradient(y, x)

    def test_nested_tapes(self):
        """Only the innermost tape records."""
        with GradTape() as outer:
            with GradTape() as inner:
                assert active_tape() is inner
                x = inner.watch(np.ones(2))
                ops.sum(x)
            assert active_tape() is outer
        assert len(inner) == 1
        assert len(outer) == 0

    def test_independent_tapes_on_threads(self):
        """Tapes are per thread, so parallel backward passes do not interfere."""

        def grad_of(scale):
            with GradTape() as tape:
                x = tape.watch(np.arange(4.0))
                y = ops.sum(ops.scale(ops.mul(x, x), scale))
            return tape.gradient(y, x)

        scales = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(grad_of, scales))
        for s, g in zip(scales, results):
            np.testing.assert_allclose(g, 2 * s * np.arange(4.0))

    def test_operator_sugar(self):
        with GradTape() as tape:
            x = tape.watch(np.array([[1.0, 2.0]]))
            w = tape.watch(np.array([[3.0], [4.0]]))
            y = ops.sum(-(x @ w) * 2)
        np.testing.assert_allclose(tape.gradient(y, w), [[-2.0], [-4.0]])
