"""Tests for the EP energy and its hyperparameter gradient."""

import itertools
import math

import numpy as np
import pytest

from sparse_ep.data.dataset import Dataset
from sparse_ep.hypergrad.energy import (
    ep_energy,
    factor_energy,
    freeze_factors,
    site_energy,
)
from sparse_ep.hypergrad.gradient import frozen_gradient, grad_hyper
from sparse_ep.inference.state import KernelCache, TrainConfig
from sparse_ep.inference.trainer import batch_pass, init_state
from sparse_ep.model.types import HyperParams, Method
from sparse_ep.oracle.finite_diff import fd_gradient, relative_errors
from sparse_ep.oracle.verify import check_gradient, gradient_problem, random_factor_state


class TestFrozenGradient:
    """Tests for frozen_gradient against finite differences."""

    @pytest.mark.parametrize("method", list(Method))
    def test_matches_finite_differences(self, method: Method) -> None:
        """Test every component of the exact gradient."""
        data, hypers = gradient_problem(n=20, m=5, d=2)
        state = random_factor_state(method, data, hypers)
        frozen = freeze_factors(state, state.kernel_cache(data.X))

        analytic = frozen_gradient(hypers, frozen, data).values
        numeric = fd_gradient(lambda h: factor_energy(h, frozen, data), hypers, step=1e-5)

        assert analytic.shape == (hypers.size,)
        assert relative_errors(analytic, numeric).max() < 1e-4

    @pytest.mark.parametrize("method", list(Method))
    def test_self_check(self, method: Method) -> None:
        """Test the built-in gradient check for each method."""
        result = check_gradient(method, seed=2)
        assert result.passed, result.detail

    @pytest.mark.parametrize("method", list(Method))
    def test_full_minibatch_is_exact(self, method: Method) -> None:
        """Test that a minibatch of every instance gives the exact gradient."""
        data, hypers = gradient_problem()
        state = random_factor_state(method, data, hypers)
        frozen = freeze_factors(state, state.kernel_cache(data.X))

        exact = frozen_gradient(hypers, frozen, data).values
        full = frozen_gradient(hypers, frozen, data, batch=np.arange(data.n)[::-1]).values

        np.testing.assert_allclose(full, exact, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("method", list(Method))
    def test_minibatch_estimates_average_to_exact(self, method: Method) -> None:
        """Test unbiasedness by averaging over every minibatch of size 2 out of 6."""
        data, hypers = gradient_problem(n=6, m=3)
        state = random_factor_state(method, data, hypers)
        frozen = freeze_factors(state, state.kernel_cache(data.X))

        estimates = [
            frozen_gradient(hypers, frozen, data, batch=np.array(batch)).values
            for batch in itertools.combinations(range(data.n), 2)
        ]

        assert len(estimates) == 15
        exact = frozen_gradient(hypers, frozen, data).values
        np.testing.assert_allclose(np.mean(estimates, axis=0), exact, rtol=1e-8, atol=1e-10)

    def test_minibatch_freeze_matches_full_freeze(self) -> None:
        """Test that freezing only the minibatch rows gives the same EP gradient."""
        data, hypers = gradient_problem(n=12, m=4, seed=1)
        state = random_factor_state(Method.EP, data, hypers)
        batch = np.array([7, 2, 9])
        full = freeze_factors(state, state.kernel_cache(data.X))

        expected = frozen_gradient(hypers, full, data, batch=batch).values
        grad = grad_hyper(state, batch, data)

        np.testing.assert_allclose(grad.values, expected, rtol=1e-7, atol=1e-8)

    def test_minibatch_freeze_skips_full_geometry(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that a minibatch hyper-gradient never projects the whole training set."""
        data, hypers = gradient_problem(n=12, m=4, seed=1)
        state = random_factor_state(Method.EP, data, hypers)

        def no_full(self: KernelCache) -> None:
            raise AssertionError("full geometry requested")

        monkeypatch.setattr(KernelCache, "full", no_full)
        grad = grad_hyper(state, [0, 5], data)

        assert grad.batch_size == 2
        assert grad.is_finite

    def test_minibatch_freeze_rejects_other_rows(self) -> None:
        """Test that factors frozen for one minibatch cannot score another."""
        data, hypers = gradient_problem(n=12, m=4, seed=1)
        state = random_factor_state(Method.EP, data, hypers)
        frozen = freeze_factors(state, state.kernel_cache(data.X), np.array([0, 1]))

        with pytest.raises(ValueError, match="another minibatch"):
            frozen_gradient(hypers, frozen, data, batch=np.array([2, 3]))

    def test_empty_batch_keeps_prior_term(self) -> None:
        """Test the gradient of an empty minibatch is finite."""
        data, hypers = gradient_problem()
        state = random_factor_state(Method.SEP, data, hypers)

        grad = grad_hyper(state, [], data)

        assert grad.batch_size == 0
        assert grad.is_finite

    def test_named_components(self) -> None:
        """Test that gradient entries are labelled by parameter."""
        data, hypers = gradient_problem(d=2, m=5)
        state = random_factor_state(Method.EP, data, hypers)

        named = grad_hyper(state, None, data).named(hypers)

        assert list(named)[:3] == ["log_lengthscale[0]", "log_lengthscale[1]", "log_amplitude"]
        assert "inducing[4,1]" in named
        assert len(named) == hypers.size


class TestEnergy:
    """Tests for ep_energy and site_energy."""

    def test_site_energy_at_fixed_point(self) -> None:
        """Test that both energy forms agree once EP has converged."""
        data, hypers = gradient_problem(n=30, m=6, seed=4)
        config = TrainConfig(method=Method.EP, m=6, learn_hypers=False)
        state = init_state(config, data, hypers)
        for _ in range(300):
            batch_pass(state, data, config)

        assert site_energy(state, data) == pytest.approx(ep_energy(state, data), abs=1e-6)

    def test_prior_energy_is_zero_without_data(self) -> None:
        """Test log Z_q = 0 when there are no likelihood factors."""
        data, hypers = gradient_problem(n=0)
        state = init_state(TrainConfig(method=Method.SEP, m=5), data, hypers)

        assert ep_energy(state, data) == pytest.approx(0.0, abs=1e-6)

    def test_single_uniform_site(self) -> None:
        """Test that one uniform site gives the prior-cavity normalizer log 0.5."""
        data = Dataset(X=np.array([[0.3, -0.2]]), y=np.array([1.0]))
        hypers = HyperParams(
            log_lengthscales=np.zeros(2), log_amplitude=0.0, inducing_points=np.eye(2)
        )
        state = init_state(TrainConfig(method=Method.EP, m=2), data, hypers)

        assert ep_energy(state, data) == pytest.approx(math.log(0.5), abs=1e-8)

    def test_energy_is_negative(self) -> None:
        """Test that the approximate log evidence of probit labels is below zero."""
        data, hypers = gradient_problem(n=20)
        config = TrainConfig(method=Method.EP, m=5, learn_hypers=False)
        state = init_state(config, data, hypers)
        for _ in range(20):
            batch_pass(state, data, config)

        assert ep_energy(state, data) < 0.0

    def test_site_energy_requires_ep(self) -> None:
        """Test that site_energy rejects non-EP states."""
        data, hypers = gradient_problem()
        state = random_factor_state(Method.ADF, data, hypers)

        with pytest.raises(ValueError, match="EP states only"):
            site_energy(state, data)

    def test_mismatched_data(self) -> None:
        """Test that frozen factors must cover the data."""
        data, hypers = gradient_problem(n=20)
        other, _ = gradient_problem(n=10)
        state = random_factor_state(Method.SEP, data, hypers)
        frozen = freeze_factors(state, state.kernel_cache(data.X))

        with pytest.raises(ValueError, match="Frozen factors"):
            factor_energy(hypers, frozen, other)
