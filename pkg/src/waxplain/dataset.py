"""Tabular ingestion, pooled standardization and periodic time-series pairing."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyFileError,
    EmptyResultError,
    MalformedCellError,
    RaggedRowsError,
    WindowOutOfRangeError,
)

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class DataMatrix:
    """One empirical distribution: N instances of d real features, uniform mass."""

    values: np.ndarray
    feature_names: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a non-empty N x d matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("data matrix contains NaN or Inf")
        values.setflags(write=False)
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise DimensionMismatchError(
                f"{len(names)} feature names for {values.shape[1]} columns"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_features(self):
        return self.values.shape[1]

    def take_columns(self, columns):
        columns = list(columns)
        return DataMatrix(self.values[:, columns], tuple(self.feature_names[c] for c in columns))


@dataclass(frozen=True)
class ScalingParams:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, data):
        return (np.asarray(data, dtype=float) - self.mean) / self.std


@dataclass(frozen=True)
class CoupledPairs:
    """Source/target sets with the true one-to-one pairing between their rows."""

    source: DataMatrix
    target: DataMatrix
    pair_index: tuple

    def __post_init__(self):
        if self.source.n_features != self.target.n_features:
            raise DimensionMismatchError("source and target feature counts differ")
        ks = [k for k, _ in self.pair_index]
        ls = [l for _, l in self.pair_index]
        if len(set(ks)) != len(ks) or len(set(ls)) != len(ls):
            raise ValueError("pairing must be one-to-one")
        if ks and (min(ks) < 0 or max(ks) >= len(self.source)):
            raise IndexError("source pair index out of range")
        if ls and (min(ls) < 0 or max(ls) >= len(self.target)):
            raise IndexError("target pair index out of range")


def as_matrix(data):
    """Return ``data`` (a DataMatrix or array-like) as a float N x d ndarray."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def check_same_dim(source, target):
    if source.shape[1] != target.shape[1]:
        raise DimensionMismatchError(
            f"source has {source.shape[1]} features, target has {target.shape[1]}"
        )


def load_csv(path, has_header=True, delimiter=","):
    """Read a numeric CSV file into a DataMatrix.

    Blank lines are skipped. Every remaining cell must parse as a float;
    there is no imputation.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delimiter) if row]

    names = ()
    start = 0
    if has_header:
        if not rows:
            raise EmptyFileError(f"{path}: no header row")
        names = tuple(cell.strip() for cell in rows[0])
        start = 1
    body = rows[start:]
    if not body:
        raise EmptyFileError(f"{path}: no data rows")

    width = len(names) if has_header else len(body[0])
    values = np.empty((len(body), width))
    for r, row in enumerate(body, start=start + 1):
        if len(row) != width:
            raise RaggedRowsError(f"{path}: row {r} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            try:
                values[r - start - 1, c] = float(cell)
            except ValueError:
                raise MalformedCellError(r, c + 1, cell) from None
    if not np.all(np.isfinite(values)):
        bad_r, bad_c = np.argwhere(~np.isfinite(values))[0]
        raise MalformedCellError(int(bad_r) + start + 1, int(bad_c) + 1, body[bad_r][bad_c])
    return DataMatrix(values, names)


def standardize(source, target):
    """Z-score both datasets with the mean and population std of their union.

    Returns
    -------
    (DataMatrix, DataMatrix, ScalingParams)
    """
    src, tgt = as_matrix(source), as_matrix(target)
    check_same_dim(src, tgt)
    pooled = np.vstack([src, tgt])
    params = ScalingParams(pooled.mean(axis=0), np.maximum(pooled.std(axis=0), STD_FLOOR))
    return (
        DataMatrix(params.apply(src), _names(source)),
        DataMatrix(params.apply(tgt), _names(target)),
        params,
    )


def _names(data):
    return data.feature_names if isinstance(data, DataMatrix) else ()


def time_series_pairing(series, t, delta_t, period=24):
    """Build same-period source/target sets from an hourly series.

    Row ``r`` of ``series`` is hour ``r``. The source holds rows
    ``t + k*period`` and the target rows ``t + delta_t + k*period`` for every
    period ``k`` in which both exist; row ``k`` of each is the true pair.
    """
    values = as_matrix(series)
    if not (0 <= t < t + delta_t <= period - 1):
        raise WindowOutOfRangeError(
            f"need 0 <= t < t + delta_t <= period - 1, got t={t}, delta_t={delta_t}, period={period}"
        )
    src_rows = np.arange(t, values.shape[0] - delta_t, period)
    if src_rows.size == 0:
        raise EmptyResultError("series does not contain one complete source/target window")
    names = _names(series)
    pairs = tuple((k, k) for k in range(src_rows.size))
    return CoupledPairs(
        DataMatrix(values[src_rows], names),
        DataMatrix(values[src_rows + delta_t], names),
        pairs,
    )


def ground_truth_relevance(pairs):
    """Per-feature mean squared displacement over the truly coupled pairs."""
    if not pairs.pair_index:
        raise EmptyResultError("no coupled pairs")
    k, l = np.array(pairs.pair_index).T
    diff = pairs.target.values[l] - pairs.source.values[k]
    return np.mean(diff**2, axis=0)
