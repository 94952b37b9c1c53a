"""Tests for the Adam hyperparameter optimizer."""

import numpy as np
import pytest

from sparse_ep.hypergrad.optimizer import AdamState, opt_step
from sparse_ep.model.types import HyperParams


def make_hypers() -> HyperParams:
    return HyperParams(
        log_lengthscales=np.zeros(2),
        log_amplitude=0.0,
        inducing_points=np.array([[0.0, 1.0], [1.0, 0.0]]),
    )


class TestOptStep:
    """Tests for opt_step."""

    def test_first_step_moves_by_learning_rate(self) -> None:
        """Test that the bias-corrected first step is lr * sign(grad)."""
        h = make_hypers()
        grad = np.array([2.0, -0.5, 1e-3, -7.0, 3.0, 0.1, -0.2])

        state, h_new = opt_step(AdamState(learning_rate=0.01), grad, h)

        step = h_new.to_vector() - h.to_vector()
        np.testing.assert_allclose(step, 0.01 * np.sign(grad), rtol=1e-4)
        assert state.t == 1
        assert state.skipped == 0

    def test_does_not_mutate_inputs(self) -> None:
        """Test that the old state and hyperparameters are left alone."""
        h = make_hypers()
        before = h.to_vector().copy()
        state = AdamState()

        opt_step(state, np.ones(h.size), h)

        np.testing.assert_array_equal(h.to_vector(), before)
        assert state.t == 0
        assert state.m is None

    def test_non_finite_gradient_is_skipped(self) -> None:
        """Test that NaN gradients leave the hyperparameters unchanged."""
        h = make_hypers()
        grad = np.ones(h.size)
        grad[3] = np.nan

        state, h_new = opt_step(AdamState(), grad, h)

        assert h_new is h
        assert state.t == 1
        assert state.skipped == 1
        np.testing.assert_array_equal(state.m, np.zeros(h.size))

    def test_is_deterministic(self) -> None:
        """Test that identical inputs give bitwise identical outputs."""
        h = make_hypers()
        grad = np.linspace(-1.0, 2.0, h.size)
        state = AdamState(learning_rate=0.03)
        state, h = opt_step(state, -grad, h)

        first_state, first = opt_step(state, grad, h)
        second_state, second = opt_step(state, grad, h)

        np.testing.assert_array_equal(first.to_vector(), second.to_vector())
        np.testing.assert_array_equal(first_state.m, second_state.m)
        np.testing.assert_array_equal(first_state.v, second_state.v)

    def test_constant_gradient_steps_by_learning_rate(self) -> None:
        """Test that every step under a constant gradient has size lr per coordinate."""
        h = make_hypers()
        grad = np.array([3.0, -1.0, 0.5, -2.0, 4.0, 1.0, -0.25])
        state = AdamState(learning_rate=0.02)

        for _ in range(10):
            before = h.to_vector()
            state, h = opt_step(state, grad, h)
            np.testing.assert_allclose(h.to_vector() - before, 0.02 * np.sign(grad), rtol=1e-6)

    def test_wrong_shape(self) -> None:
        """Test that a gradient of the wrong length raises."""
        with pytest.raises(ValueError, match="shape"):
            opt_step(AdamState(), np.ones(3), make_hypers())

    def test_ascends_concave_objective(self) -> None:
        """Test convergence to the maximum of a concave quadratic."""
        h = make_hypers()
        target = np.linspace(-0.5, 0.5, h.size)
        state = AdamState(learning_rate=0.05)

        for _ in range(2000):
            grad = -(h.to_vector() - target)
            state, h = opt_step(state, grad, h)

        np.testing.assert_allclose(h.to_vector(), target, atol=0.05)


class TestAdamState:
    """Tests for AdamState serialization."""

    def test_dict_round_trip(self) -> None:
        """Test to_dict/from_dict after a few steps."""
        h = make_hypers()
        state = AdamState(learning_rate=0.02)
        for k in range(3):
            state, h = opt_step(state, np.full(h.size, k + 1.0), h)

        restored = AdamState.from_dict(state.to_dict())

        assert restored.t == 3
        assert restored.learning_rate == 0.02
        assert restored.m is not None and restored.v is not None
        np.testing.assert_array_equal(restored.m, state.m)
        np.testing.assert_array_equal(restored.v, state.v)

    def test_fresh_state(self) -> None:
        """Test serialization before any step."""
        restored = AdamState.from_dict(AdamState().to_dict())

        assert restored.t == 0
        assert restored.m is None
        assert restored.v is None
