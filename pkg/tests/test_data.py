"""Tests for dataset ingestion, splitting and synthetic data."""

from pathlib import Path

import numpy as np
import pytest
from scipy.special import ndtr

from sparse_ep.data.dataset import (
    DataError,
    Dataset,
    init_inducing,
    load_csv,
    minibatches,
    resolve_inducing_count,
    standardize_split,
    write_csv,
)
from sparse_ep.data.synthetic import synthetic_gp
from sparse_ep.model.types import HyperParams


def write_text(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def generating_hypers(d: int, lengthscale: float = 1.0, amplitude: float = 4.0) -> HyperParams:
    return HyperParams(
        log_lengthscales=np.full(d, np.log(lengthscale)),
        log_amplitude=float(np.log(amplitude)),
        inducing_points=np.zeros((1, d)),
    )


class TestLoadCsv:
    """Tests for load_csv."""

    def test_zero_one_labels(self, tmp_path: Path) -> None:
        """Test that 0 maps to -1 and 1 maps to +1."""
        path = write_text(tmp_path / "d.csv", "a,b,label\n1.5,2,0\n-3,4e-1,1\n0,0,1\n")

        data = load_csv(path)

        np.testing.assert_array_equal(data.y, [-1.0, 1.0, 1.0])
        np.testing.assert_array_equal(data.X, [[1.5, 2.0], [-3.0, 0.4], [0.0, 0.0]])
        assert data.feature_names == ["a", "b"]
        assert data.label_mapping == {"0": -1, "1": 1}
        assert data.name == "d"

    def test_numeric_label_order(self, tmp_path: Path) -> None:
        """Test that labels are ordered numerically, not as text."""
        path = write_text(tmp_path / "d.csv", "x,y\n1,10\n2,9\n")

        data = load_csv(path)

        np.testing.assert_array_equal(data.y, [1.0, -1.0])

    def test_text_labels(self, tmp_path: Path) -> None:
        """Test two text labels in alphabetical order."""
        path = write_text(tmp_path / "d.csv", "x,cls\n1,yes\n2,no\n")

        data = load_csv(path)

        assert data.label_mapping == {"no": -1, "yes": 1}

    def test_label_column_by_name_and_index(self, tmp_path: Path) -> None:
        """Test selecting a non-final label column."""
        path = write_text(tmp_path / "d.csv", "cls,x,z\n1,0.5,7\n2,0.25,8\n")

        by_name = load_csv(path, label_column="cls")
        by_index = load_csv(path, label_column=0)

        np.testing.assert_array_equal(by_name.X, by_index.X)
        np.testing.assert_array_equal(by_name.y, [-1.0, 1.0])
        assert by_name.feature_names == ["x", "z"]

    def test_no_header(self, tmp_path: Path) -> None:
        """Test a file without a header row."""
        path = write_text(tmp_path / "d.csv", "1,2,-1\n3,4,1\n")

        data = load_csv(path, has_header=False)

        assert data.n == 2
        assert data.d == 2

    def test_missing_value(self, tmp_path: Path) -> None:
        """Test that an empty cell reports its line and column."""
        path = write_text(tmp_path / "d.csv", "a,b,label\n1,2,0\n3,,1\n")

        with pytest.raises(DataError) as exc_info:
            load_csv(path)

        assert exc_info.value.row == 3
        assert exc_info.value.column == "b"
        assert "Missing value" in str(exc_info.value)

    def test_unparseable_value(self, tmp_path: Path) -> None:
        """Test that text in a feature column is rejected."""
        path = write_text(tmp_path / "d.csv", "a,label\n1,0\nabc,1\n")

        with pytest.raises(DataError, match="Cannot parse 'abc'"):
            load_csv(path)

    def test_single_class(self, tmp_path: Path) -> None:
        """Test that one label value is an error."""
        path = write_text(tmp_path / "d.csv", "a,label\n1,1\n2,1\n")

        with pytest.raises(DataError, match="exactly two"):
            load_csv(path)

    def test_three_classes(self, tmp_path: Path) -> None:
        """Test that three label values are an error."""
        path = write_text(tmp_path / "d.csv", "a,label\n1,0\n2,1\n3,2\n")

        with pytest.raises(DataError, match="found 3"):
            load_csv(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test a path that does not exist."""
        with pytest.raises(DataError, match="not found"):
            load_csv(tmp_path / "absent.csv")

    def test_unknown_label_column(self, tmp_path: Path) -> None:
        """Test a label column name that is not in the header."""
        path = write_text(tmp_path / "d.csv", "a,label\n1,0\n2,1\n")

        with pytest.raises(DataError, match="not found"):
            load_csv(path, label_column="target")


class TestWriteCsv:
    """Tests for write_csv."""

    def test_exact_round_trip(self, tmp_path: Path) -> None:
        """Test that written features are read back bit for bit."""
        rng = np.random.default_rng(0)
        data = Dataset(X=rng.standard_normal((25, 3)) * 1e3, y=np.tile([1.0, -1.0], 13)[:25])
        path = tmp_path / "out" / "data.csv"

        write_csv(data, path)
        loaded = load_csv(path)

        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.y, data.y)


class TestStandardizeSplit:
    """Tests for standardize_split."""

    def _data(self, n: int = 50) -> Dataset:
        rng = np.random.default_rng(1)
        X = np.column_stack([rng.normal(5.0, 3.0, n), np.full(n, 2.0)])
        return Dataset(X=X, y=np.where(np.arange(n) % 3 == 0, 1.0, -1.0))

    def test_sizes(self) -> None:
        """Test round(test_fraction * n) test rows."""
        train, test = standardize_split(self._data(50), 0.2, seed=0)

        assert test.n == 10
        assert train.n == 40

    def test_train_statistics(self) -> None:
        """Test zero mean and unit scale on train, constant features kept at scale 1."""
        train, test = standardize_split(self._data(), 0.2, seed=0)

        np.testing.assert_allclose(train.X[:, 0].mean(), 0.0, atol=1e-12)
        np.testing.assert_allclose(train.X[:, 0].std(), 1.0, rtol=1e-12)
        np.testing.assert_array_equal(train.X[:, 1], 0.0)
        assert train.feature_scale is not None
        assert train.feature_scale[1] == 1.0
        assert test.feature_mean is train.feature_mean

    def test_deterministic(self) -> None:
        """Test that the same seed gives the same split."""
        a_train, _ = standardize_split(self._data(), 0.3, seed=7)
        b_train, _ = standardize_split(self._data(), 0.3, seed=7)
        c_train, _ = standardize_split(self._data(), 0.3, seed=8)

        np.testing.assert_array_equal(a_train.X, b_train.X)
        assert not np.array_equal(a_train.X, c_train.X)

    def test_invalid_fraction(self) -> None:
        """Test fractions outside (0, 1)."""
        with pytest.raises(ValueError):
            standardize_split(self._data(), 1.0, seed=0)


class TestBatching:
    """Tests for minibatches and inducing-point helpers."""

    def test_minibatches_cover_epoch(self) -> None:
        """Test that one epoch visits every index once."""
        batches = list(minibatches(23, 5, np.random.default_rng(0)))

        assert [len(b) for b in batches] == [5, 5, 5, 5, 3]
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(23))

    def test_minibatch_size_must_be_positive(self) -> None:
        """Test a zero minibatch size."""
        with pytest.raises(ValueError):
            list(minibatches(10, 0, np.random.default_rng(0)))

    @pytest.mark.parametrize(
        ("m", "n_train", "expected"),
        [(50, 1000, 50), ("50", 1000, 50), ("50%", 400, 200), ("10%", 4, 1), ("100%", 7, 7)],
    )
    def test_resolve_inducing_count(self, m: int | str, n_train: int, expected: int) -> None:
        """Test counts and percentages."""
        assert resolve_inducing_count(m, n_train) == expected

    @pytest.mark.parametrize("m", [0, "0%", "150%"])
    def test_resolve_inducing_count_invalid(self, m: int | str) -> None:
        """Test counts out of range."""
        with pytest.raises(ValueError):
            resolve_inducing_count(m, 100)

    def test_init_inducing_subsamples_rows(self) -> None:
        """Test distinct rows drawn without replacement."""
        X = np.arange(40, dtype=float).reshape(20, 2)

        Z = init_inducing(X, 8, seed=3)

        assert Z.shape == (8, 2)
        assert len({tuple(z) for z in Z}) == 8
        for z in Z:
            assert np.any(np.all(X == z, axis=1))
        np.testing.assert_array_equal(Z, init_inducing(X, 8, seed=3))

    def test_init_inducing_more_than_rows(self) -> None:
        """Test jittered extras when m exceeds n."""
        X = np.eye(3)

        Z = init_inducing(X, 5, seed=0)

        assert Z.shape == (5, 3)
        np.testing.assert_array_equal(Z[:3], X)


class TestSyntheticGp:
    """Tests for synthetic_gp."""

    def test_deterministic(self) -> None:
        """Test that a seed fixes the sample."""
        a = synthetic_gp(100, 2, generating_hypers(2), seed=5)
        b = synthetic_gp(100, 2, generating_hypers(2), seed=5)

        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)
        assert a.latent is not None
        assert a.latent.shape == (100,)

    def test_too_large(self) -> None:
        """Test the dense sampling limit."""
        with pytest.raises(ValueError, match="dense sampling"):
            synthetic_gp(5001, 1, generating_hypers(1), seed=0)

    def test_tiny_amplitude_is_coin_flip(self) -> None:
        """Test that a negligible latent signal gives balanced labels."""
        data = synthetic_gp(2000, 1, generating_hypers(1, amplitude=1e-8), seed=0)

        assert np.mean(data.y > 0) == pytest.approx(0.5, abs=0.04)

    def test_labels_follow_latent(self) -> None:
        """Test that sign(f) predicts the labels well for a strong signal."""
        data = synthetic_gp(2000, 2, generating_hypers(2, lengthscale=0.5), seed=1)

        assert data.latent is not None
        accuracy = np.mean(np.where(data.latent >= 0, 1.0, -1.0) == data.y)
        assert accuracy > 0.75

    def test_label_signs_agree_with_latent(self) -> None:
        """Test that labels carry the sign of large latent values and flip at the probit rate."""
        data = synthetic_gp(1500, 2, generating_hypers(2, amplitude=25.0), seed=2)

        assert data.latent is not None
        f = data.latent
        strong = np.abs(f) > 6.0
        assert strong.sum() > 100
        np.testing.assert_array_equal(data.y[strong], np.sign(f[strong]))

        agree = np.mean(np.sign(f) == data.y)
        expected = np.mean(ndtr(np.abs(f)))
        assert agree == pytest.approx(expected, abs=0.03)

    def test_dimension_mismatch(self) -> None:
        """Test hyperparameters of the wrong dimension."""
        with pytest.raises(ValueError, match="length-scales"):
            synthetic_gp(10, 3, generating_hypers(2), seed=0)
