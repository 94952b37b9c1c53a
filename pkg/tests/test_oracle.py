"""Tests for the brute-force references and the self-check suite."""

import itertools
import math

import numpy as np
import pytest

from sparse_ep.model.sites import tilted_moments
from sparse_ep.model.types import HyperParams, NumericalError
from sparse_ep.oracle.dense import dense_conditional_variance
from sparse_ep.oracle.finite_diff import fd_gradient, fd_sweep, relative_errors
from sparse_ep.oracle.quadrature import hermite_nodes, quad_tilted
from sparse_ep.oracle.verify import TILTED_GRID, check_tilted_moments, run_verification


class TestQuadrature:
    """Tests for quad_tilted and hermite_nodes."""

    def test_weights_integrate_gaussian(self) -> None:
        """Test that the weights sum to sqrt(pi) and integrate x^2 exactly."""
        x, w = hermite_nodes(60)

        assert w.sum() == pytest.approx(math.sqrt(math.pi), rel=1e-13)
        assert float(w @ (x * x)) == pytest.approx(math.sqrt(math.pi) / 2.0, rel=1e-12)

    def test_nodes_agree_with_numpy_rule(self) -> None:
        """Test the eigenvalue construction against numpy's Gauss-Hermite rule."""
        x, w = hermite_nodes(60)
        x_ref, w_ref = np.polynomial.hermite.hermgauss(60)

        assert np.all(np.diff(x) > 0)
        np.testing.assert_allclose(x, -x[::-1], atol=1e-12)
        np.testing.assert_allclose(x, x_ref, atol=1e-10)
        np.testing.assert_allclose(w, w_ref, atol=1e-12)

    @pytest.mark.parametrize(
        ("y", "m_c", "v_c", "s"), list(itertools.product(*TILTED_GRID.values()))
    )
    def test_matches_closed_form(self, y: float, m_c: float, v_c: float, s: float) -> None:
        """Test log Z, mean and variance on the standard grid."""
        tr = tilted_moments(y, m_c, v_c, s)

        log_Z, mean, var = quad_tilted(y, m_c, v_c, s, nodes=100)

        assert log_Z == pytest.approx(tr.log_Z, abs=1e-8)
        assert mean == pytest.approx(tr.mu_hat, abs=1e-8)
        assert var == pytest.approx(tr.v_hat, abs=1e-8)

    def test_converged_in_nodes(self) -> None:
        """Test that doubling the node count changes nothing."""
        for y, m_c, v_c, s in [(1.0, -4.0, 10.0, 0.0), (-1.0, 1.0, 0.1, 5.0)]:
            coarse = quad_tilted(y, m_c, v_c, s, nodes=100)
            fine = quad_tilted(y, m_c, v_c, s, nodes=200)
            np.testing.assert_allclose(coarse, fine, atol=1e-10)

    def test_too_few_nodes(self) -> None:
        """Test the minimum node count."""
        with pytest.raises(ValueError, match="50 nodes"):
            quad_tilted(1.0, 0.0, 1.0, 0.0, nodes=20)

    def test_check_passes(self) -> None:
        """Test the tilted-moment self-check."""
        result = check_tilted_moments()

        assert result.passed
        assert result.max_error < 1e-8


class TestFiniteDifferences:
    """Tests for fd_gradient and relative_errors."""

    def _hypers(self) -> HyperParams:
        return HyperParams(
            log_lengthscales=np.array([0.1, -0.2]),
            log_amplitude=0.3,
            inducing_points=np.array([[1.0, 2.0]]),
        )

    def test_quadratic(self) -> None:
        """Test the gradient of a quadratic in the hyperparameter vector."""
        h = self._hypers()
        weights = np.arange(1.0, h.size + 1.0)

        grad = fd_gradient(lambda p: float(weights @ p.to_vector() ** 2), h)

        np.testing.assert_allclose(grad, 2.0 * weights * h.to_vector(), rtol=1e-8)

    def test_sweep_steps(self) -> None:
        """Test that a sweep returns one gradient per step size."""
        h = self._hypers()

        sweep = fd_sweep(lambda p: p.amplitude, h)

        assert sorted(sweep) == [1e-6, 1e-5, 1e-4]
        for grad in sweep.values():
            assert grad[2] == pytest.approx(h.amplitude, rel=1e-6)

    def test_non_finite_function(self) -> None:
        """Test that a NaN objective is reported."""
        with pytest.raises(NumericalError):
            fd_gradient(lambda p: float("nan"), self._hypers())

    def test_relative_error_floor(self) -> None:
        """Test that tiny reference values fall back to an absolute scale."""
        errors = relative_errors(np.array([1.1, 1e-6]), np.array([1.0, 0.0]))

        np.testing.assert_allclose(errors, [0.1, 1e-3])


class TestDense:
    """Tests for the dense references."""

    def test_conditional_variance_of_single_point(self) -> None:
        """Test s for one inducing point and a scalar kernel."""
        s = dense_conditional_variance(np.array([[2.0]]), np.array([1.0]), 2.0)

        assert s == pytest.approx(1.5)


class TestRunVerification:
    """Tests for run_verification."""

    def test_all_checks_pass(self) -> None:
        """Test the full self-check suite."""
        results = run_verification()

        assert [r.name for r in results] == [
            "tilted-moments",
            "gradient-ep",
            "gradient-sep",
            "gradient-adf",
            "ep-sep-reconstruct",
            "sep-accumulation",
            "sep-minibatch-equals-batch",
        ]
        failed = [r for r in results if not r.passed]
        assert not failed, [(r.name, r.max_error, r.detail) for r in failed]
