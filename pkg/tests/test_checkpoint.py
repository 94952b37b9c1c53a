"""Tests for checkpoint save and load."""

import json
from pathlib import Path

import numpy as np
import pytest

from sparse_ep.inference.state import ModelState, TrainConfig
from sparse_ep.inference.trainer import fit
from sparse_ep.model.types import Method
from sparse_ep.oracle.verify import gradient_problem
from sparse_ep.storage.checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_standardization,
    save_checkpoint,
    serialize_state,
)


def trained_state(method: Method) -> ModelState:
    data, hypers = gradient_problem(n=20, m=4)
    state, _ = fit(data, TrainConfig(method=method, m=4, iterations=2), hypers=hypers)
    return state


class TestCheckpointRoundTrip:
    """Tests for save_checkpoint/load_checkpoint."""

    @pytest.mark.parametrize("method", list(Method))
    def test_exact_round_trip(self, tmp_path: Path, method: Method) -> None:
        """Test that every stored array comes back bit for bit."""
        state = trained_state(method)
        path = save_checkpoint(state, tmp_path / "run" / "checkpoint.json")

        loaded = load_checkpoint(path)

        assert loaded.method == method
        assert loaded.n == state.n
        assert loaded.step == state.step == 2
        np.testing.assert_array_equal(loaded.hypers.to_vector(), state.hypers.to_vector())
        assert loaded.hypers.jitter == state.hypers.jitter
        np.testing.assert_array_equal(loaded.q_nat.h, state.q_nat.h)
        np.testing.assert_array_equal(loaded.q_nat.Lambda, state.q_nat.Lambda)
        assert loaded.opt.t == state.opt.t
        np.testing.assert_array_equal(loaded.opt.m, state.opt.m)

        if method == Method.EP:
            assert loaded.sites is not None and state.sites is not None
            np.testing.assert_array_equal(loaded.sites.nu, state.sites.nu)
            np.testing.assert_array_equal(loaded.sites.log_s, state.sites.log_s)
        elif method == Method.SEP:
            assert loaded.theta is not None and state.theta is not None
            np.testing.assert_array_equal(loaded.theta.Lambda, state.theta.Lambda)
        else:
            assert loaded.sites is None and loaded.theta is None

    def test_standardization(self, tmp_path: Path) -> None:
        """Test that feature statistics are stored alongside the model."""
        state = trained_state(Method.ADF)
        mean, scale = np.array([0.5, -1.0]), np.array([2.0, 1.0])
        path = save_checkpoint(state, tmp_path / "c.json", standardization=(mean, scale))

        stored = load_standardization(path)

        assert stored is not None
        np.testing.assert_array_equal(stored[0], mean)
        np.testing.assert_array_equal(stored[1], scale)

    def test_no_standardization(self, tmp_path: Path) -> None:
        """Test a checkpoint written without feature statistics."""
        path = save_checkpoint(trained_state(Method.ADF), tmp_path / "c.json")

        assert load_standardization(path) is None


class TestCheckpointErrors:
    """Tests for unreadable checkpoints."""

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test a path that does not exist."""
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path: Path) -> None:
        """Test a file that is not JSON."""
        path = tmp_path / "c.json"
        path.write_text("{not json")

        with pytest.raises(CheckpointError, match="not valid JSON"):
            load_checkpoint(path)

    def test_not_an_object(self, tmp_path: Path) -> None:
        """Test a JSON document that is not an object."""
        path = tmp_path / "c.json"
        path.write_text("[1, 2]")

        with pytest.raises(CheckpointError, match="JSON object"):
            load_checkpoint(path)

    def test_failed_validation(self, tmp_path: Path) -> None:
        """Test that a truncated site array is rejected."""
        data = serialize_state(trained_state(Method.EP))
        data["factors"]["nu"] = data["factors"]["nu"][:-1]
        path = tmp_path / "c.json"
        path.write_text(json.dumps(data))

        with pytest.raises(CheckpointError, match="factors.nu"):
            load_checkpoint(path)
