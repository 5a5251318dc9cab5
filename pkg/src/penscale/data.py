"""Ordinal data containers, CSV ingestion, indicator matrices and standardization.

Levels are stored internally on the scale ``1..k_j`` for every variable.
Variables recorded on shifted scales (e.g. ``-4..4``) carry an integer
offset such that ``internal = raw + offset``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DataValidationError, ParseError

__all__ = [
    "OrdinalDataMatrix",
    "IndicatorMatrix",
    "StandardizedMatrix",
    "load_ordinal_csv",
    "build_indicator",
    "standardize_columns",
    "apply_scaling",
]


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OrdinalDataMatrix:
    """Integer level matrix with per-variable level counts.

    Parameters
    ----------
    values : array of shape (n, p)
        Levels on the internal scale ``1..k_j``.
    level_counts : array of shape (p,), optional
        Declared number of levels ``k_j``. Defaults to the observed maxima.
    variable_names : sequence of str, optional
    offsets : array of shape (p,), optional
        ``internal = raw + offset``; zero when omitted.
    """

    values: np.ndarray
    level_counts: np.ndarray = None
    variable_names: tuple = None
    offsets: np.ndarray = None
    _require_n_gt_p: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DataValidationError(f"expected a 2-d level matrix, got ndim={values.ndim}")
        if values.size and not np.issubdtype(values.dtype, np.integer):
            if not np.all(np.isfinite(values)) or np.any(values != np.round(values)):
                raise DataValidationError("level matrix must contain integers only")
        values = values.astype(np.int64)
        n, p = values.shape
        if p == 0 or n < 2:
            raise DataValidationError(f"need at least 2 rows and 1 column, got {n}x{p}")
        if self._require_n_gt_p and n <= p:
            raise DataValidationError(f"need more observations than variables (n={n}, p={p})")

        names = self.variable_names
        if names is None:
            names = tuple(f"V{j + 1}" for j in range(p))
        names = tuple(str(s) for s in names)
        if len(names) != p:
            raise DataValidationError(f"{len(names)} variable names for {p} columns")

        counts = self.level_counts
        if counts is None:
            counts = values.max(axis=0)
        counts = np.asarray(counts, dtype=np.int64).reshape(-1)
        if counts.shape != (p,):
            raise DataValidationError(f"level_counts has length {counts.size}, expected {p}")

        offsets = self.offsets
        offsets = np.zeros(p, dtype=np.int64) if offsets is None else np.asarray(offsets, dtype=np.int64).reshape(-1)
        if offsets.shape != (p,):
            raise DataValidationError(f"offsets has length {offsets.size}, expected {p}")

        for j in range(p):
            if counts[j] < 2:
                raise DataValidationError(f"variable {names[j]!r} has fewer than 2 levels")
            col = values[:, j]
            bad = np.flatnonzero((col < 1) | (col > counts[j]))
            if bad.size:
                i = bad[0]
                raise DataValidationError(
                    f"variable {names[j]!r}, row {i + 1}: level {col[i] - offsets[j]} outside "
                    f"declared range {1 - offsets[j]}..{counts[j] - offsets[j]}"
                )
            if np.all(col == col[0]):
                raise DataValidationError(f"variable {names[j]!r} is constant")

        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "level_counts", _readonly(counts))
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "offsets", _readonly(offsets))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @classmethod
    def from_labels(cls, labels, offsets=None, level_counts=None, variable_names=None):
        """Build from raw labels, shifting by ``offsets`` onto ``1..k_j``."""
        labels = np.asarray(labels)
        offs = np.zeros(labels.shape[1], dtype=np.int64) if offsets is None else np.asarray(offsets)
        return cls(labels + offs, level_counts=level_counts, variable_names=variable_names, offsets=offs)

    def to_labels(self):
        """Levels on the original (possibly shifted) scale."""
        return self.values - self.offsets

    def subset(self, rows):
        """Row subset sharing the declared level universe."""
        return OrdinalDataMatrix(
            self.values[np.asarray(rows)],
            level_counts=self.level_counts,
            variable_names=self.variable_names,
            offsets=self.offsets,
            _require_n_gt_p=False,
        )


@dataclass(frozen=True)
class IndicatorMatrix:
    """Zero/one design matrix of one variable, one column per declared level."""

    entries: np.ndarray
    variable_index: int

    @property
    def counts(self):
        return self.entries.sum(axis=0)


@dataclass(frozen=True)
class StandardizedMatrix:
    """Column-standardized matrix with the means and sds (divisor n-1) used."""

    values: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray

    def inverse(self):
        return self.values * self.column_sds + self.column_means


def _parse_row(cells, lineno, names):
    out = []
    for j, cell in enumerate(cells):
        s = cell.strip()
        name = names[j] if names and j < len(names) else f"column {j + 1}"
        if s == "":
            raise ParseError(f"line {lineno}, {name}: empty cell (missing values are not supported)", lineno, j + 1)
        try:
            out.append(int(s))
        except ValueError:
            raise ParseError(f"line {lineno}, {name}: {s!r} is not an integer level", lineno, j + 1) from None
    return out


def _schema_row(cells, key, lineno):
    first = cells[0].strip()
    rest = [first[len(key) + 1:]] + list(cells[1:])
    try:
        return [int(c.strip()) for c in rest]
    except ValueError:
        raise ParseError(f"line {lineno}: malformed '{key}:' schema row", lineno) from None


def _is_int(s):
    try:
        int(s.strip())
    except ValueError:
        return False
    return True


def load_ordinal_csv(path, header=None):
    """Read an ordinal CSV file.

    The file may start with a header row of variable names, followed by
    optional schema rows ``levels:k_1,...,k_p`` and ``offset:o_1,...,o_p``.
    Data rows hold integer levels on the raw scale.

    Parameters
    ----------
    path : str or Path
    header : bool or None
        Whether the first row holds variable names. ``None`` detects it
        from the presence of non-integer cells.

    Returns
    -------
    OrdinalDataMatrix
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataValidationError(f"{path}: no data")

    names = None
    lineno, first = rows[0]
    if header is None:
        header = not first[0].strip().startswith(("levels:", "offset:")) and not all(_is_int(c) for c in first)
    if header:
        names = [c.strip() for c in first]
        rows = rows[1:]

    levels = offsets = None
    while rows and rows[0][1][0].strip().startswith(("levels:", "offset:")):
        lineno, cells = rows.pop(0)
        if cells[0].strip().startswith("levels:"):
            levels = _schema_row(cells, "levels", lineno)
        else:
            offsets = _schema_row(cells, "offset", lineno)

    width = len(names) if names else (len(rows[0][1]) if rows else 0)
    data = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise ParseError(f"line {lineno}: expected {width} cells, found {len(cells)}", lineno)
        data.append(_parse_row(cells, lineno, names))
    if not data:
        raise DataValidationError(f"{path}: no data rows")
    for label, vec in (("levels", levels), ("offset", offsets)):
        if vec is not None and len(vec) != width:
            raise DataValidationError(f"{label} row has {len(vec)} entries, expected {width}")
    return OrdinalDataMatrix.from_labels(np.array(data, dtype=np.int64), offsets=offsets,
                                         level_counts=levels, variable_names=names)


def build_indicator(data, j):
    """Indicator matrix ``Z_j`` of variable ``j`` (0-based) with ``k_j`` columns."""
    if not 0 <= j < data.p:
        raise IndexError(f"variable index {j} out of range for p={data.p}")
    k = int(data.level_counts[j])
    Z = np.zeros((data.n, k))
    Z[np.arange(data.n), data.values[:, j] - 1] = 1.0
    return IndicatorMatrix(Z, j)


def standardize_columns(values, names=None):
    """Center columns and scale them to unit variance (divisor n-1)."""
    X = np.asarray(values, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataValidationError("standardization needs a 2-d array with at least 2 rows")
    means = X.mean(axis=0)
    centered = X - means
    sds = np.sqrt((centered ** 2).sum(axis=0) / (X.shape[0] - 1))
    scale = np.maximum(np.abs(means), 1.0)
    const = np.flatnonzero(sds <= 1e-12 * scale)
    if const.size:
        j = const[0]
        label = names[j] if names is not None else f"column {j + 1}"
        raise DataValidationError(f"{label} is constant and cannot be standardized")
    return StandardizedMatrix(centered / sds, means, sds)


def apply_scaling(data, thetas: Sequence):
    """Replace each level by its score: ``out[i, j] = thetas[j][values[i, j]]``.

    ``data`` is an :class:`OrdinalDataMatrix` or an integer array on the
    internal ``1..k_j`` scale; ``thetas`` holds arrays or quantification
    objects exposing ``theta``.
    """
    values = data.values if isinstance(data, OrdinalDataMatrix) else np.asarray(data)
    if values.ndim != 2 or values.shape[1] != len(thetas):
        raise DataValidationError(f"{len(thetas)} score vectors for {values.shape[-1]} variables")
    out = np.empty(values.shape, dtype=float)
    for j, t in enumerate(thetas):
        theta = np.asarray(getattr(t, "theta", t), dtype=float)
        if isinstance(data, OrdinalDataMatrix) and theta.size != data.level_counts[j]:
            raise DataValidationError(
                f"variable {j}: score vector has length {theta.size}, expected {data.level_counts[j]}")
        col = values[:, j]
        if col.min() < 1 or col.max() > theta.size:
            raise DataValidationError(f"variable {j}: level outside 1..{theta.size}")
        out[:, j] = theta[col - 1]
    return out
