# MIT License
#
# Copyright (c) 2024 cyclicmono contributors
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

"""
Individual-level panel data for multinomial choice: the PanelDataset container,
report-based validation and CSV / NetCDF input and output.

Long CSV layout, one row per (id, period)::

    id,period,choice,x_1_1,...,x_1_D,...,x_K_1,...,x_K_D[,z]

where x_k_j is covariate j of inside option k. The outside option 0 carries no
covariates (they are zero by normalisation).
"""

import logging
import re
import typing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import xarray as xr

from .errors import DataFormatError, InvalidInputError

logger = logging.getLogger(__name__)

COVARIATE_COLUMN = re.compile(r"^x_(\d+)_(\d+)$")

ERROR = "error"
WARNING = "warning"
INFO = "info"


def covariate_column(k: int, j: int) -> str:
    """CSV column name for covariate j (1-based) of inside option k (1-based)."""
    return f"x_{k}_{j}"


def choice_indicators(Y: np.ndarray, K: int) -> np.ndarray:
    """One-hot inside-option indicators, shape Y.shape + (K,); choice 0 maps to all zeros."""
    Y = np.asarray(Y)
    return (Y[..., np.newaxis] == np.arange(1, K + 1)).astype(float)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PanelDataset:
    """
    A balanced panel of n individuals observed over T periods choosing among options 0..K

    Arguments:
        X: covariates, shape (n, T, K, d_x)
        Y: chosen option labels in 0..K, shape (n, T)
        Z: optional integer control labels, shape (n, T)
        ids: optional individual identifiers, shape (n,), defaults to "1".."n"
        periods: optional period labels, shape (T,), defaults to 1..T
    """
    X: np.ndarray
    Y: np.ndarray
    Z: typing.Optional[np.ndarray] = None
    ids: typing.Optional[np.ndarray] = None
    periods: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.X)
        Y = np.asarray(self.Y)
        if X.ndim != 4:
            raise InvalidInputError(f"X must have shape (n, T, K, d_x), got {X.shape}")
        if Y.shape != X.shape[:2]:
            raise InvalidInputError(f"Y must have shape {X.shape[:2]}, got {Y.shape}")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))
        if self.Z is not None:
            Z = np.asarray(self.Z)
            if Z.shape != X.shape[:2]:
                raise InvalidInputError(f"Z must have shape {X.shape[:2]}, got {Z.shape}")
            object.__setattr__(self, "Z", _frozen(Z))
        ids = self.ids
        if ids is None:
            ids = np.array([str(i + 1) for i in range(X.shape[0])])
        ids = np.asarray(ids).astype(str)
        if ids.shape != (X.shape[0],):
            raise InvalidInputError("ids must have one entry per individual")
        object.__setattr__(self, "ids", _frozen(ids))
        periods = self.periods
        if periods is None:
            periods = np.arange(1, X.shape[1] + 1)
        periods = np.asarray(periods)
        if periods.shape != (X.shape[1],):
            raise InvalidInputError("periods must have one entry per period")
        object.__setattr__(self, "periods", _frozen(periods))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.X.shape[2]

    @property
    def d_x(self) -> int:
        return self.X.shape[3]

    @property
    def has_controls(self) -> bool:
        return self.Z is not None

    def pairs(self) -> typing.List[typing.Tuple[int, int]]:
        """All 1-based period pairs (s, t) with s < t."""
        return [(s, t) for s in range(1, self.T + 1) for t in range(s + 1, self.T + 1)]

    def choice_indicators(self) -> np.ndarray:
        return choice_indicators(self.Y, self.K)

    def subset(self, rows) -> "PanelDataset":
        rows = np.asarray(rows, dtype=int)
        return PanelDataset(self.X[rows], self.Y[rows],
                            None if self.Z is None else self.Z[rows],
                            self.ids[rows], self.periods)

    def to_xarray(self) -> xr.Dataset:
        ds = xr.Dataset(
            {
                "X": (("id", "period", "option", "covariate"), np.asarray(self.X, dtype=float)),
                "Y": (("id", "period"), np.asarray(self.Y, dtype=np.int64)),
            },
            coords={
                "id": np.asarray(self.ids, dtype=str),
                "period": np.asarray(self.periods),
                "option": np.arange(1, self.K + 1),
                "covariate": np.arange(1, self.d_x + 1),
            })
        if self.Z is not None:
            ds["Z"] = (("id", "period"), np.asarray(self.Z, dtype=np.int64))
        return ds

    @staticmethod
    def from_xarray(ds: xr.Dataset) -> "PanelDataset":
        for variable in ["X", "Y"]:
            if variable not in ds:
                raise DataFormatError(f"No variable {variable}")
        X = ds["X"].transpose("id", "period", "option", "covariate").data
        Y = ds["Y"].transpose("id", "period").data
        Z = ds["Z"].transpose("id", "period").data if "Z" in ds else None
        return PanelDataset(X, Y, Z, ids=ds["id"].data, periods=ds["period"].data)

    def summary(self) -> str:
        shares = [float(np.mean(self.Y == k)) for k in range(self.K + 1)]
        share_text = " ".join(f"{s:.4f}" for s in shares)
        return (f"n={self.n} T={self.T} K={self.K} d_x={self.d_x} "
                f"controls={'yes' if self.has_controls else 'no'} choice shares: {share_text}")


@dataclass(frozen=True)
class ValidationIssue:
    severity: str
    location: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.location}: {self.message}"


@dataclass
class ValidationReport:
    issues: typing.List[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(issue.severity == ERROR for issue in self.issues)

    def add(self, severity: str, location: str, message: str):
        self.issues.append(ValidationIssue(severity, location, message))

    def errors(self) -> typing.List[ValidationIssue]:
        return [issue for issue in self.issues if issue.severity == ERROR]

    def warnings(self) -> typing.List[ValidationIssue]:
        return [issue for issue in self.issues if issue.severity == WARNING]

    def __str__(self):
        lines = [f"validation {'passed' if self.ok else 'failed'} ({len(self.issues)} issues)"]
        lines += ["  " + str(issue) for issue in self.issues]
        return "\n".join(lines)


def validate(d: PanelDataset) -> ValidationReport:
    """
    Check a dataset for problems that would invalidate estimation

    Never raises; problems are reported as error or warning issues.
    """
    report = ValidationReport()
    try:
        X = np.asarray(d.X, dtype=float)
    except (TypeError, ValueError) as ex:
        report.add(ERROR, "X", f"covariates are not numeric: {ex}")
        return report
    n, T, K, d_x = X.shape

    if T < 2:
        report.add(ERROR, "dataset", f"at least 2 periods are required, found {T}")

    try:
        Y = np.asarray(d.Y, dtype=float)
    except (TypeError, ValueError) as ex:
        report.add(ERROR, "Y", f"choices are not numeric: {ex}")
        Y = None
    if Y is not None:
        bad = ~np.isfinite(Y) | (Y != np.round(Y)) | (Y < 0) | (Y > K)
        for (i, t) in zip(*np.nonzero(bad)):
            report.add(ERROR, f"id={d.ids[i]} period={d.periods[t]}",
                       f"choice {Y[i, t]} is not a label in 0..{K}")

    nonfinite = ~np.all(np.isfinite(X), axis=(2, 3))
    for (i, t) in zip(*np.nonzero(nonfinite)):
        report.add(ERROR, f"id={d.ids[i]} period={d.periods[t]}", "non-finite covariate value")

    finite_X = np.where(np.isfinite(X), X, np.nan)
    for j in range(d_x):
        column = finite_X[..., j]
        if n * T * K == 0 or np.all(np.isnan(column)):
            continue
        if np.nanmax(column) == np.nanmin(column):
            report.add(WARNING, f"covariate {j + 1}",
                       "time-invariant covariate not identified (constant across all individuals, "
                       "periods and options; absorbed by the fixed effects)")
        elif T >= 2 and np.all(np.nanmax(column, axis=1) == np.nanmin(column, axis=1)):
            report.add(WARNING, f"covariate {j + 1}",
                       "time-invariant covariate not identified (never varies over time "
                       "within an individual; absorbed by the fixed effects)")

    if d.Z is not None:
        try:
            Z = np.asarray(d.Z, dtype=float)
            if not np.all(np.isfinite(Z)) or np.any(Z != np.round(Z)):
                report.add(ERROR, "Z", "control labels must be integers")
        except (TypeError, ValueError) as ex:
            report.add(ERROR, "Z", f"control labels are not numeric: {ex}")

    for issue in report.issues:
        if issue.severity == WARNING:
            logger.warning(str(issue))
    return report


def _csv_columns(K: int, d_x: int, with_controls: bool) -> typing.List[str]:
    columns = ["id", "period", "choice"]
    columns += [covariate_column(k, j) for k in range(1, K + 1) for j in range(1, d_x + 1)]
    if with_controls:
        columns.append("z")
    return columns


def write_panel_csv(d: PanelDataset, path):
    """Write the dataset in long format, rows ordered by individual then period."""
    n, T, K, d_x = d.X.shape
    data = {
        "id": np.repeat(d.ids, T),
        "period": np.tile(d.periods, n),
        "choice": np.asarray(d.Y, dtype=np.int64).reshape(-1),
    }
    flat_X = np.asarray(d.X, dtype=float).reshape(n * T, K, d_x)
    for k in range(K):
        for j in range(d_x):
            data[covariate_column(k + 1, j + 1)] = flat_X[:, k, j]
    if d.Z is not None:
        data["z"] = np.asarray(d.Z, dtype=np.int64).reshape(-1)
    df = pd.DataFrame(data, columns=_csv_columns(K, d_x, d.Z is not None))
    df.to_csv(path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")


def _parse_covariate_columns(columns) -> typing.Tuple[int, int]:
    found = {}
    for column in columns:
        match = COVARIATE_COLUMN.match(column)
        if match:
            found[(int(match.group(1)), int(match.group(2)))] = column
    if not found:
        raise DataFormatError("missing covariate columns x_k_j", row=1)
    K = max(k for (k, _) in found)
    d_x = max(j for (_, j) in found)
    for k in range(1, K + 1):
        for j in range(1, d_x + 1):
            if (k, j) not in found:
                raise DataFormatError(f"missing column {covariate_column(k, j)}", row=1)
    return K, d_x


def integer_column(df: pd.DataFrame, name: str) -> np.ndarray:
    values = pd.to_numeric(df[name], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values) | (values != np.round(values))
    if np.any(bad):
        first = int(np.nonzero(bad)[0][0])
        raise DataFormatError(f"column {name} must hold integers, found {df[name].iloc[first]!r}",
                              row=first + 2)
    return values.astype(np.int64)


def read_panel_csv(path) -> PanelDataset:
    """
    Read a long-format panel CSV

    Raises:
        DataFormatError: for missing columns, non-numeric values, duplicate
            (id, period) rows or ragged panels; the message names the file row
    """
    try:
        df = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip", encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as ex:
        raise DataFormatError(f"unable to parse {path}: {ex}") from ex

    for required in ["id", "period", "choice"]:
        if required not in df.columns:
            raise DataFormatError(f"missing column {required}", row=1)
    K, d_x = _parse_covariate_columns(df.columns)

    periods_col = integer_column(df, "period")
    choices = integer_column(df, "choice")
    controls = integer_column(df, "z") if "z" in df.columns else None
    ids_col = df["id"].astype(str).to_numpy()

    keys = pd.DataFrame({"id": ids_col, "period": periods_col})
    duplicated = keys.duplicated(keep="first").to_numpy()
    if np.any(duplicated):
        first = int(np.nonzero(duplicated)[0][0])
        raise DataFormatError("duplicate (id, period) row", row=first + 2,
                              location=f"id={ids_col[first]} period={periods_col[first]}")

    ids = pd.unique(ids_col)
    periods = np.sort(pd.unique(periods_col))
    id_index = {value: i for (i, value) in enumerate(ids)}
    period_index = {value: t for (t, value) in enumerate(periods)}
    n, T = len(ids), len(periods)

    counts = keys.groupby("id", sort=False).size()
    ragged = counts[counts != T]
    if len(ragged) > 0:
        bad_id = ragged.index[0]
        first = int(np.nonzero(ids_col == bad_id)[0][0])
        raise DataFormatError(f"ragged panel: individual observed in {int(ragged.iloc[0])} of {T} periods",
                              row=first + 2, location=f"id={bad_id}")

    X = np.zeros((n, T, K, d_x))
    Y = np.zeros((n, T), dtype=np.int64)
    Z = None if controls is None else np.zeros((n, T), dtype=np.int64)
    rows_i = np.array([id_index[v] for v in ids_col], dtype=int)
    rows_t = np.array([period_index[v] for v in periods_col], dtype=int)
    for k in range(1, K + 1):
        for j in range(1, d_x + 1):
            name = covariate_column(k, j)
            values = pd.to_numeric(df[name], errors="coerce").to_numpy(dtype=float)
            missing = np.isnan(values) & df[name].notna().to_numpy()
            if np.any(missing):
                first = int(np.nonzero(missing)[0][0])
                raise DataFormatError(f"column {name} is not numeric: {df[name].iloc[first]!r}", row=first + 2)
            X[rows_i, rows_t, k - 1, j - 1] = values
    Y[rows_i, rows_t] = choices
    if Z is not None:
        Z[rows_i, rows_t] = controls
    logger.info("read %d rows (%d individuals, %d periods) from %s", len(df), n, T, path)
    return PanelDataset(X, Y, Z, ids=ids, periods=periods)


def write_panel_netcdf(d: PanelDataset, path):
    d.to_xarray().to_netcdf(path)


def read_panel_netcdf(path) -> PanelDataset:
    with xr.open_dataset(path) as ds:
        return PanelDataset.from_xarray(ds.load())


def read_panel(path) -> PanelDataset:
    """Read a panel from CSV or, for a .nc path, from NetCDF."""
    if str(path).endswith(".nc"):
        return read_panel_netcdf(path)
    return read_panel_csv(path)


def write_panel(d: PanelDataset, path):
    if str(path).endswith(".nc"):
        write_panel_netcdf(d, path)
    else:
        write_panel_csv(d, path)
