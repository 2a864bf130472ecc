"""Tabular data model: datasets, seeded splits, CSV ingestion, standardization."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    levels: Optional[tuple[str, ...]] = None  # None for numeric columns

    @property
    def is_ordinal(self) -> bool:
        return self.levels is not None


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    response: np.ndarray
    columns: tuple[ColumnMeta, ...] = ()
    response_name: str = "y"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.response, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise DataError(f"features have {x.shape[0]} rows but response has {y.shape[0]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or infinite values")
        cols = self.columns or tuple(ColumnMeta(f"x{j}") for j in range(x.shape[1]))
        if len(cols) != x.shape[1]:
            raise DataError(f"{len(cols)} column descriptors for {x.shape[1]} feature columns")
        for j, c in enumerate(cols):
            if c.is_ordinal:
                v = x[:, j]
                if np.any(v != np.round(v)) or np.any(v < 0) or np.any(v >= len(c.levels)):
                    raise DataError(f"column {c.name!r} holds values that are not level indices")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "columns", tuple(cols))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "calibration", "test"):
            a = np.asarray(getattr(self, name), dtype=np.int64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        parts = [set(self.train.tolist()), set(self.calibration.tolist()), set(self.test.tolist())]
        if sum(map(len, parts)) != len(set().union(*parts)):
            raise DataError("split index sets overlap")


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float).reshape(-1)
        s = np.asarray(self.scales, dtype=float).reshape(-1)
        if m.shape != s.shape:
            raise DataError("means and scales differ in length")
        if np.any(~(s > 0)):
            raise DataError("standardizer scales must be strictly positive")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scales", s)

    @property
    def d(self) -> int:
        return self.means.shape[0]

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DataError(f"expected {self.d} features, got {x.shape[-1]}")
        return (x - self.means) / self.scales

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.d:
            raise DataError(f"expected {self.d} features, got {z.shape[-1]}")
        return z * self.scales + self.means


def standardize(st: Standardizer, x) -> np.ndarray:
    return st.transform(x)


def fit_standardizer(ds: Dataset, rows) -> Standardizer:
    """Column means and population SDs over `rows`; constant columns get scale 1."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("cannot fit a standardizer on an empty row set")
    x = ds.features[rows]
    means = x.mean(axis=0)
    sd = x.std(axis=0, ddof=0)
    scales = np.where(sd > 0, sd, 1.0)
    return Standardizer(means, scales)


def split_dataset(ds: Dataset, fractions: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> SplitIndices:
    """Seeded permutation of the rows cut into train / calibration / test blocks.

    Train and calibration receive floor(f * n) rows each. The test block gets
    floor(f_test * n) rows, or every remaining row when the fractions sum to one.
    """
    if len(fractions) != 3:
        raise DataError("fractions must be (train, calibration, test)")
    f_tr, f_cal, f_te = (float(f) for f in fractions)
    if min(f_tr, f_cal, f_te) <= 0:
        raise DataError(f"split fractions must be positive, got {tuple(fractions)}")
    total = f_tr + f_cal + f_te
    if total > 1 + 1e-9:
        raise DataError(f"split fractions sum to {total} > 1")
    n = ds.n if isinstance(ds, Dataset) else int(ds)
    if n < 3:
        raise DataError("need at least 3 rows to split")

    n_tr = math.floor(f_tr * n + 1e-9)
    n_cal = math.floor(f_cal * n + 1e-9)
    if abs(total - 1) <= 1e-9:
        n_te = n - n_tr - n_cal
    else:
        n_te = math.floor(f_te * n + 1e-9)
    if min(n_tr, n_cal, n_te) <= 0:
        raise DataError(f"split of n={n} by {tuple(fractions)} leaves an empty block")

    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train=perm[:n_tr],
        calibration=perm[n_tr:n_tr + n_cal],
        test=perm[n_tr + n_cal:n_tr + n_cal + n_te],
    )


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: non-numeric value {cell!r}") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def load_csv(
    path,
    response_column: Optional[str] = None,
    ordinal_levels: Optional[Mapping[str, Sequence[str]]] = None,
    feature_columns: Optional[Sequence[str]] = None,
) -> Dataset:
    """Read a headed CSV into a Dataset.

    Ordinal columns are encoded as the 0-based position of the cell in the
    declared level list. Any unparsable cell rejects the whole file. Row
    numbers in error messages count data rows from 1.

    With ``response_column=None`` the file is read as features only and the
    response is filled with zeros (prediction inputs).
    """
    ordinal_levels = {k: tuple(v) for k, v in (ordinal_levels or {}).items()}
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        records = [r for r in reader if r]

    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    if response_column is not None and response_column not in header:
        raise DataError(f"missing column {response_column!r} in {path}")
    if feature_columns is None:
        feature_columns = [h for h in header if h != response_column]
    for c in list(feature_columns) + list(ordinal_levels):
        if c not in header:
            raise DataError(f"missing column {c!r} in {path}")

    pos = {h: j for j, h in enumerate(header)}
    x = np.empty((len(records), len(feature_columns)))
    y = np.zeros(len(records))
    for i, rec in enumerate(records, start=1):
        if len(rec) != len(header):
            raise DataError(f"row {i}: expected {len(header)} cells, found {len(rec)}")
        for j, col in enumerate(feature_columns):
            cell = rec[pos[col]].strip()
            if col in ordinal_levels:
                levels = ordinal_levels[col]
                if cell not in levels:
                    raise DataError(f"row {i}, column {col!r}: unknown level {cell!r}")
                x[i - 1, j] = levels.index(cell)
            else:
                x[i - 1, j] = _parse_float(cell, i, col)
        if response_column is not None:
            y[i - 1] = _parse_float(rec[pos[response_column]].strip(), i, response_column)

    cols = tuple(ColumnMeta(c, ordinal_levels.get(c)) for c in feature_columns)
    return Dataset(x, y, cols, response_name=response_column or "y")


def _format_cell(v: float, meta: ColumnMeta) -> str:
    if meta.is_ordinal:
        return meta.levels[int(v)]
    return repr(float(v))


def save_csv(ds: Dataset, path, include_response: bool = True) -> None:
    """Write a Dataset back to CSV, ordinal columns as level names, floats lossless."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ds.feature_names + ([ds.response_name] if include_response else [])
        w.writerow(header)
        for i in range(ds.n):
            row = [_format_cell(v, c) for v, c in zip(ds.features[i], ds.columns)]
            if include_response:
                row.append(repr(float(ds.response[i])))
            w.writerow(row)


def subset(ds: Dataset, rows) -> Dataset:
    rows = np.asarray(rows, dtype=np.int64)
    return Dataset(ds.features[rows], ds.response[rows], ds.columns, ds.response_name)
