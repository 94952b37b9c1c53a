"""Binary classification datasets: CSV ingestion, standardization and batching."""

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from ..model.types import FloatArray

logger = logging.getLogger("sparse-ep.data")


class DataError(Exception):
    """Raised when a dataset cannot be read or is unusable for training."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass
class Dataset:
    """Feature matrix with labels in {-1, +1}."""

    X: FloatArray
    y: FloatArray
    feature_names: list[str] = field(default_factory=list)
    label_mapping: dict[str, int] = field(default_factory=dict)
    feature_mean: FloatArray | None = None
    feature_scale: FloatArray | None = None
    latent: FloatArray | None = None
    name: str = ""

    def __post_init__(self) -> None:
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]} labels")
        if not np.all(np.isfinite(self.X)):
            raise DataError("Features contain non-finite values")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise DataError("Labels must be -1 or +1")
        if not self.feature_names:
            self.feature_names = [f"x{k}" for k in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def subset(self, index: FloatArray) -> "Dataset":
        """Rows ``index`` of this dataset, keeping its metadata."""
        latent = None if self.latent is None else self.latent[index]
        return replace(self, X=self.X[index], y=self.y[index], latent=latent)

    def has_both_classes(self) -> bool:
        return bool(np.any(self.y > 0) and np.any(self.y < 0))


def _resolve_label_column(columns: list[str], label_column: str | int) -> int:
    if isinstance(label_column, int):
        idx = label_column
    elif label_column in columns:
        return columns.index(label_column)
    else:
        try:
            idx = int(label_column)
        except ValueError:
            raise DataError(
                f"Label column '{label_column}' not found", column=str(label_column)
            ) from None
    if idx < 0:
        idx += len(columns)
    if not 0 <= idx < len(columns):
        raise DataError(f"Label column index {label_column} out of range", column=str(label_column))
    return idx


def _label_order(values: list[str]) -> list[str]:
    """Distinct labels in ascending order, numerically when every label is a number."""
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def _parse_float(text: str) -> float:
    """Correctly rounded decimal parse; unparseable text becomes NaN."""
    try:
        return float(text)
    except ValueError:
        return float("nan")


def load_csv(path: Path | str, label_column: str | int = -1, has_header: bool = True) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    The smaller of the two label values maps to -1 and the larger to +1.

    Raises:
        DataError: unreadable file, unparseable or missing cell, or not exactly two labels.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except FileNotFoundError as e:
        raise DataError(f"Data file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Cannot parse {path}: {e}") from e

    columns = [str(c) for c in frame.columns]
    if not has_header:
        columns = [f"x{k}" for k in range(len(columns))]
        frame.columns = columns
    if len(columns) < 2:
        raise DataError(f"{path} needs at least one feature column and a label column")

    label_idx = _resolve_label_column(columns, label_column)
    label_name = columns[label_idx]
    feature_names = [c for k, c in enumerate(columns) if k != label_idx]
    first_line = 2 if has_header else 1

    labels = frame[label_name].str.strip()
    empty = np.flatnonzero((labels == "").to_numpy())
    if empty.size:
        row = int(empty[0]) + first_line
        raise DataError(f"Missing label at line {row}, column '{label_name}'", row, label_name)

    distinct = _label_order(sorted(set(labels)))
    if len(distinct) != 2:
        raise DataError(
            f"Expected exactly two label values in '{label_name}', found {len(distinct)}: "
            f"{distinct[:5]}",
            column=label_name,
        )
    mapping = {distinct[0]: -1, distinct[1]: 1}
    y = labels.map(mapping).to_numpy(dtype=np.float64)

    X = np.empty((len(frame), len(feature_names)))
    for k, name in enumerate(feature_names):
        raw = frame[name].str.strip()
        parsed = raw.map(_parse_float).to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            row = int(bad[0]) + first_line
            value = raw.iloc[int(bad[0])]
            what = "Missing value" if value == "" else f"Cannot parse {value!r}"
            raise DataError(f"{what} at line {row}, column '{name}'", row, name)
        X[:, k] = parsed

    logger.info(f"Loaded {path.name}: n={X.shape[0]}, d={X.shape[1]}, labels {mapping}")
    return Dataset(
        X=X, y=y, feature_names=feature_names, label_mapping=mapping, name=path.stem
    )


def write_csv(data: Dataset, path: Path | str, label_name: str = "label") -> None:
    """Write features and +/-1 labels with round-trip exact decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(data.X, columns=data.feature_names)
    frame[label_name] = data.y.astype(int)
    frame.to_csv(path, index=False, float_format="%.17g")


def standardize_split(
    data: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Seeded random train/test split, standardized with train statistics only.

    ``round(test_fraction * n)`` rows go to the test set. Constant features
    keep scale 1.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    n_test = int(round(test_fraction * data.n))
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    train, test = data.subset(train_idx), data.subset(test_idx)
    mean = train.X.mean(axis=0) if train.n else np.zeros(data.d)
    scale = train.X.std(axis=0) if train.n else np.ones(data.d)
    scale = np.where(scale > 0.0, scale, 1.0)

    train = replace(train, X=(train.X - mean) / scale, feature_mean=mean, feature_scale=scale)
    test = replace(test, X=(test.X - mean) / scale, feature_mean=mean, feature_scale=scale)
    return train, test


def minibatches(n: int, size: int, rng: np.random.Generator) -> Iterator[FloatArray]:
    """Index batches over one shuffled epoch; the last batch may be short."""
    if size < 1:
        raise ValueError(f"Minibatch size must be positive, got {size}")
    perm = rng.permutation(n)
    for start in range(0, n, size):
        yield perm[start : start + size]


def resolve_inducing_count(m: int | str, n_train: int) -> int:
    """Inducing count from an integer or a percentage string such as ``"50%"``."""
    if isinstance(m, str):
        text = m.strip()
        if text.endswith("%"):
            pct = float(text[:-1])
            if not 0.0 < pct <= 100.0:
                raise ValueError(f"Inducing percentage must be in (0, 100], got {m}")
            return max(1, int(round(pct / 100.0 * n_train)))
        m = int(text)
    if m < 1:
        raise ValueError(f"Inducing count must be at least 1, got {m}")
    return m


def init_inducing(X: FloatArray, m: int, seed: int) -> FloatArray:
    """Seeded uniform subsample of the rows of ``X`` without replacement.

    When m exceeds the number of rows, the extra points are jittered copies.
    """
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    if n == 0:
        return rng.standard_normal((m, X.shape[1]))
    if m <= n:
        return X[rng.choice(n, size=m, replace=False)].copy()
    extra = X[rng.choice(n, size=m - n, replace=True)] + 1e-3 * rng.standard_normal(
        (m - n, X.shape[1])
    )
    return np.vstack([X, extra])
