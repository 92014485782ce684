"""Dataset ingestion, standardization and back-transformation.

Fits operate on a centered response and a design whose columns are centered
and scaled so that ``||x_j||^2 = n``. No intercept is estimated; it is
recovered from the column means when coefficients are mapped back to the raw
scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .exceptions import DataError

__all__ = [
    "RawDataset",
    "StandardizedDesign",
    "load_dataset",
    "standardize",
    "destandardize",
]


def _readonly(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawDataset:
    """Response vector and design matrix on their original scale."""

    y: NDArray[np.float64]
    X: NDArray[np.float64]
    column_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1:
            raise DataError(f"y must be one-dimensional, got shape {y.shape}")
        if X.ndim != 2:
            raise DataError(f"X must be two-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if y.shape[0] < 2:
            raise DataError(f"need at least 2 observations, got {y.shape[0]}")
        if X.shape[1] < 1:
            raise DataError("no predictors")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("non-finite entries in data")
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} column names for {X.shape[1]} predictors")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class StandardizedDesign:
    """Centered response and column-standardized design.

    Attributes
    ----------
    y_c : ndarray, shape (n,)
        Centered response.
    X_s : ndarray, shape (n, p)
        Design with centered columns of squared norm ``n``, stored in
        Fortran order so columns are contiguous.
    y_mean : float
    col_means, col_scales : ndarray, shape (p,)
        ``X_s[:, j] = (X[:, j] - col_means[j]) / col_scales[j]``.
    """

    y_c: NDArray[np.float64]
    X_s: NDArray[np.float64]
    y_mean: float
    col_means: NDArray[np.float64]
    col_scales: NDArray[np.float64]
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        X_s = np.asfortranarray(self.X_s, dtype=float)
        X_s.setflags(write=False)
        object.__setattr__(self, "X_s", X_s)
        object.__setattr__(self, "y_c", _readonly(self.y_c))
        object.__setattr__(self, "col_means", _readonly(self.col_means))
        object.__setattr__(self, "col_scales", _readonly(self.col_scales))
        object.__setattr__(self, "y_mean", float(self.y_mean))
        if not self.column_names:
            object.__setattr__(
                self, "column_names", tuple(f"x{j + 1}" for j in range(X_s.shape[1]))
            )

    @property
    def n(self) -> int:
        return self.X_s.shape[0]

    @property
    def p(self) -> int:
        return self.X_s.shape[1]

    @classmethod
    def from_arrays(cls, X: NDArray, y: NDArray, column_names=()) -> StandardizedDesign:
        """Standardize raw arrays directly."""
        return standardize(RawDataset(y=y, X=X, column_names=tuple(column_names)))


def load_dataset(path: str | Path) -> RawDataset:
    """Read a CSV whose header names the response ``y`` first.

    Rows and columns in error messages are 1-based positions in the file,
    the header being row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "y":
        raise DataError(f"{path}: first column must be named 'y', got {header[0]!r}")
    if len(header) < 2:
        raise DataError(f"{path}: no predictors")
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}: ragged row {i}: expected {len(header)} fields, got {len(row)}"
            )
        for j, cell in enumerate(row, start=1):
            try:
                values[i - 2, j - 1] = float(cell.strip())
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell at ({i},{j}): {cell!r}"
                ) from None
    if values.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {values.shape[0]}")
    return RawDataset(y=values[:, 0], X=values[:, 1:], column_names=tuple(header[1:]))


def standardize(raw: RawDataset) -> StandardizedDesign:
    """Center ``y`` and scale each centered column of ``X`` to squared norm ``n``.

    The scale is the n-denominator standard deviation. A constant column has
    no usable scale and raises :class:`DataError`.
    """
    X = raw.X
    col_means = X.mean(axis=0)
    Xc = X - col_means
    col_scales = np.sqrt(np.mean(Xc**2, axis=0))
    for j in range(X.shape[1]):
        # a spread below rounding noise of the column values counts as constant
        if col_scales[j] <= 1e-12 * max(1.0, float(np.max(np.abs(X[:, j])))):
            raise DataError(
                f"column {j + 1} ({raw.column_names[j]!r}) is constant; cannot standardize"
            )
    y_mean = float(raw.y.mean())
    return StandardizedDesign(
        y_c=raw.y - y_mean,
        X_s=Xc / col_scales,
        y_mean=y_mean,
        col_means=col_means,
        col_scales=col_scales,
        column_names=raw.column_names,
    )


def destandardize(beta_std: NDArray, design: StandardizedDesign) -> tuple[NDArray, float]:
    """Map standardized-scale coefficients to the raw scale.

    Returns
    -------
    beta_raw : ndarray
    intercept : float
    """
    beta_std = np.asarray(beta_std, dtype=float)
    if beta_std.shape != (design.p,):
        raise DataError(f"expected {design.p} coefficients, got shape {beta_std.shape}")
    beta_raw = beta_std / design.col_scales
    intercept = design.y_mean - float(beta_raw @ design.col_means)
    return beta_raw, intercept
