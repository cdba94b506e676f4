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
Estimation from market shares.

With aggregate data the shares S_ct estimate the conditional choice probabilities
directly, so the length-2 cycle terms are (X_cs - X_ct)'(S_cs - S_ct) with no first
stage. Shares of zero are used as they are.
"""

import logging
import typing
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataFormatError, InvalidInputError
from .moments import TermSet, pair_terms
from .optimizer import EstimateResult, EstimatorOptions, estimate_beta
from .paneldata import ERROR, INFO, WARNING, ValidationReport, integer_column

logger = logging.getLogger(__name__)

SHARE_SUM_TOL = 1e-9
OUTSIDE_SHARE_TOL = 1e-6

REQUIRED_COLUMNS = ["market", "period", "choice", "share"]
COUNT_COLUMN = "n"


@dataclass(frozen=True)
class AggregateDataset:
    """
    Inside-option market shares of C markets over T periods

    Arguments:
        X: covariates, shape (C, T, K, d_x)
        S: inside-option shares, shape (C, T, K)
        n_ct: optional consumer counts, shape (C, T)
        markets: market labels, defaults to "1".."C"
        periods: period labels, defaults to 1..T
        covariates: covariate names, defaults to x_1..x_dx
    """
    X: np.ndarray
    S: np.ndarray
    n_ct: typing.Optional[np.ndarray] = None
    markets: typing.Optional[np.ndarray] = None
    periods: typing.Optional[np.ndarray] = None
    covariates: typing.Optional[typing.Tuple[str, ...]] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if X.ndim != 4 or S.shape != X.shape[:3]:
            raise InvalidInputError(f"X must be (C, T, K, d_x) and S (C, T, K), got {X.shape} and {S.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "S", S)
        if self.n_ct is not None:
            n_ct = np.asarray(self.n_ct)
            if n_ct.shape != X.shape[:2]:
                raise InvalidInputError(f"n_ct must have shape {X.shape[:2]}")
            object.__setattr__(self, "n_ct", n_ct)
        markets = self.markets if self.markets is not None else [str(c + 1) for c in range(X.shape[0])]
        object.__setattr__(self, "markets", np.asarray(markets).astype(str))
        periods = self.periods if self.periods is not None else np.arange(1, X.shape[1] + 1)
        object.__setattr__(self, "periods", np.asarray(periods))
        covariates = self.covariates or tuple(f"x_{j + 1}" for j in range(X.shape[3]))
        if len(covariates) != X.shape[3]:
            raise InvalidInputError("one covariate name is needed per coordinate")
        object.__setattr__(self, "covariates", tuple(covariates))

    @property
    def C(self) -> int:
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

    def pairs(self) -> typing.List[typing.Tuple[int, int]]:
        return [(s, t) for s in range(1, self.T + 1) for t in range(s + 1, self.T + 1)]

    def summary(self) -> str:
        consumers = "exact" if self.n_ct is None else f"min n_ct={int(np.min(self.n_ct))}"
        return f"C={self.C} T={self.T} K={self.K} d_x={self.d_x} shares: {consumers}"


def _share_violation(d: AggregateDataset) -> typing.Optional[typing.Tuple[int, int, float]]:
    sums = d.S.sum(axis=2)
    bad = np.argwhere(sums > 1.0 + SHARE_SUM_TOL)
    if bad.size == 0:
        return None
    c, t = bad[0]
    return int(c), int(t), float(sums[c, t])


def build_terms_aggregate(d: AggregateDataset) -> TermSet:
    """One term per market and pair s < t, with shares in place of estimated probabilities."""
    if d.T < 2:
        raise InvalidInputError("at least 2 periods are required")
    violation = _share_violation(d)
    if violation is not None:
        c, t, total = violation
        raise InvalidInputError(f"inside shares sum to {total:.6g} > 1 at market={d.markets[c]} period={d.periods[t]}")
    g_by_pair = {}
    for (s, t) in d.pairs():
        g_by_pair[(s, t)] = pair_terms(d.X, s, t, d.S[:, s - 1], d.S[:, t - 1])
    return TermSet(d.d_x, g_by_pair, {pair: np.arange(d.C) for pair in g_by_pair})


def estimate_beta_aggregate(d: AggregateDataset, opts: EstimatorOptions = EstimatorOptions()) -> EstimateResult:
    return estimate_beta(build_terms_aggregate(d), opts)


def select_periods(d: AggregateDataset, n_periods: int) -> AggregateDataset:
    """Keep n_periods periods spaced at (as near as possible) regular intervals, first and last included."""
    if not 2 <= n_periods <= d.T:
        raise InvalidInputError(f"n_periods must lie in 2..{d.T}")
    keep = np.unique(np.round(np.linspace(0, d.T - 1, n_periods)).astype(int))
    n_ct = None if d.n_ct is None else d.n_ct[:, keep]
    return AggregateDataset(d.X[:, keep], d.S[:, keep], n_ct, d.markets, d.periods[keep], d.covariates)


def validate_aggregate(d: AggregateDataset) -> ValidationReport:
    """Report share and covariate problems; never raises."""
    report = ValidationReport()
    if d.T < 2:
        report.add(ERROR, "dataset", f"at least 2 periods are required, found {d.T}")
    for (c, t) in np.argwhere(~np.all(np.isfinite(d.X), axis=(2, 3))):
        report.add(ERROR, f"market={d.markets[c]} period={d.periods[t]}", "non-finite covariate value")
    for (c, t) in np.argwhere(np.any(~(d.S >= 0.0), axis=2)):
        report.add(ERROR, f"market={d.markets[c]} period={d.periods[t]}", "negative or missing share")
    sums = d.S.sum(axis=2)
    for (c, t) in np.argwhere(sums > 1.0 + SHARE_SUM_TOL):
        report.add(ERROR, f"market={d.markets[c]} period={d.periods[t]}",
                   f"inside shares sum to {sums[c, t]:.6g} > 1")
    if d.T >= 2 and np.all(d.S == d.S[:, :1]):
        report.add(WARNING, "S", "shares never change over time; the objective is identically zero")
    zeros = int(np.sum(d.S == 0.0))
    if zeros:
        report.add(INFO, "S", f"{zeros} zero shares used without correction")
    if d.n_ct is not None:
        smallest = int(np.min(d.n_ct))
        ratio = np.log(d.C * d.T) / smallest if smallest > 0 else np.inf
        report.add(INFO, "n", f"min n_ct = {smallest}, log(C*T)/min n_ct = {ratio:.4g}")
    for issue in report.issues:
        if issue.severity == WARNING:
            logger.warning(str(issue))
    return report


def _add_interactions(df: pd.DataFrame, covariates: typing.List[str],
                      interactions: typing.Sequence[str]) -> typing.List[str]:
    for term in interactions:
        factors = [name.strip() for name in term.split("*")]
        if len(factors) < 2:
            raise DataFormatError(f"interaction {term!r} must name at least two columns joined by *")
        for name in factors:
            if name not in df.columns:
                raise DataFormatError(f"interaction {term!r} names unknown column {name!r}", row=1)
        name = "*".join(factors)
        if name not in df.columns:
            product = pd.to_numeric(df[factors[0]], errors="coerce")
            for other in factors[1:]:
                product = product * pd.to_numeric(df[other], errors="coerce")
            df[name] = product
        if name not in covariates:
            covariates.append(name)
    return covariates


def read_aggregate_csv(path, interactions: typing.Sequence[str] = ()) -> AggregateDataset:
    """
    Read long-format market data: market, period, choice, share, covariates and optionally n

    One row per market, period and inside option 1..K; a choice 0 row is optional and
    its share must complete the inside shares to one. Every other column (except n) is a
    covariate, in file order, followed by the requested interactions such as "price*deal".
    """
    try:
        df = pd.read_csv(path, dtype={"market": str}, float_precision="round_trip", encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as ex:
        raise DataFormatError(f"unable to parse {path}: {ex}") from ex
    for required in REQUIRED_COLUMNS:
        if required not in df.columns:
            raise DataFormatError(f"missing column {required}", row=1)
    covariates = [c for c in df.columns if c not in REQUIRED_COLUMNS and c != COUNT_COLUMN]
    covariates = _add_interactions(df, covariates, interactions)
    if not covariates:
        raise DataFormatError("no covariate columns", row=1)

    choices = integer_column(df, "choice")
    periods_col = integer_column(df, "period")
    markets_col = df["market"].astype(str).to_numpy()
    shares = pd.to_numeric(df["share"], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(shares) | (shares < 0.0)
    if np.any(bad):
        first = int(np.nonzero(bad)[0][0])
        raise DataFormatError(f"share must be a non-negative number, found {df['share'].iloc[first]!r}",
                              row=first + 2)
    if np.any(choices < 0):
        first = int(np.nonzero(choices < 0)[0][0])
        raise DataFormatError("choice labels must be non-negative", row=first + 2)

    keys = pd.DataFrame({"market": markets_col, "period": periods_col, "choice": choices})
    duplicated = keys.duplicated().to_numpy()
    if np.any(duplicated):
        first = int(np.nonzero(duplicated)[0][0])
        raise DataFormatError("duplicate (market, period, choice) row", row=first + 2,
                              location=f"market={markets_col[first]} period={periods_col[first]}")

    inside = choices > 0
    K = int(choices.max())
    if K < 1:
        raise DataFormatError("no inside-option rows")
    markets = pd.unique(markets_col)
    periods = np.sort(pd.unique(periods_col))
    C, T, d_x = len(markets), len(periods), len(covariates)
    counts = keys[inside].groupby("market", sort=False).size().reindex(markets, fill_value=0)
    ragged = counts[counts != T * K]
    if len(ragged) > 0:
        bad_market = ragged.index[0]
        first = int(np.nonzero(markets_col == bad_market)[0][0])
        raise DataFormatError(f"ragged market: {int(ragged.iloc[0])} of {T * K} period/option rows present",
                              row=first + 2, location=f"market={bad_market}")

    market_index = {value: c for (c, value) in enumerate(markets)}
    period_index = {value: t for (t, value) in enumerate(periods)}
    rows_c = np.array([market_index[v] for v in markets_col], dtype=int)
    rows_t = np.array([period_index[v] for v in periods_col], dtype=int)

    X = np.zeros((C, T, K, d_x))
    S = np.zeros((C, T, K))
    for j, name in enumerate(covariates):
        values = pd.to_numeric(df[name], errors="coerce").to_numpy(dtype=float)
        missing = inside & ~np.isfinite(values)
        if np.any(missing):
            first = int(np.nonzero(missing)[0][0])
            raise DataFormatError(f"column {name} is not a finite number: {df[name].iloc[first]!r}", row=first + 2)
        X[rows_c[inside], rows_t[inside], choices[inside] - 1, j] = values[inside]
    S[rows_c[inside], rows_t[inside], choices[inside] - 1] = shares[inside]

    sums = S.sum(axis=2)
    over = np.argwhere(sums > 1.0 + SHARE_SUM_TOL)
    if over.size:
        c, t = over[0]
        raise DataFormatError(f"inside shares sum to {sums[c, t]:.6g} > 1",
                              location=f"market={markets[c]} period={periods[t]}")
    for row in np.nonzero(~inside)[0]:
        c, t = rows_c[row], rows_t[row]
        if abs(shares[row] - (1.0 - sums[c, t])) > OUTSIDE_SHARE_TOL:
            raise DataFormatError(f"outside share {shares[row]:.6g} does not equal 1 - inside shares "
                                  f"({1.0 - sums[c, t]:.6g})", row=int(row) + 2,
                                  location=f"market={markets[c]} period={periods[t]}")

    n_ct = None
    if COUNT_COLUMN in df.columns:
        n_values = integer_column(df, COUNT_COLUMN)
        n_ct = np.zeros((C, T), dtype=np.int64)
        n_ct[rows_c, rows_t] = n_values
    logger.info("read %d markets x %d periods x %d options from %s", C, T, K, path)
    return AggregateDataset(X, S, n_ct, markets, periods, tuple(covariates))


def write_aggregate_csv(d: AggregateDataset, path, include_outside: bool = True):
    """Write long-format market data, choice 0 rows first in every market and period when requested."""
    C, T, K, d_x = d.X.shape
    labels = range(0 if include_outside else 1, K + 1)
    rows = []
    for c in range(C):
        for t in range(T):
            for k in labels:
                row = {"market": d.markets[c], "period": d.periods[t], "choice": k}
                if k == 0:
                    row["share"] = max(1.0 - float(d.S[c, t].sum()), 0.0)
                    row.update({name: 0.0 for name in d.covariates})
                else:
                    row["share"] = d.S[c, t, k - 1]
                    row.update({name: d.X[c, t, k - 1, j] for (j, name) in enumerate(d.covariates)})
                if d.n_ct is not None:
                    row[COUNT_COLUMN] = int(d.n_ct[c, t])
                rows.append(row)
    columns = REQUIRED_COLUMNS + list(d.covariates) + ([COUNT_COLUMN] if d.n_ct is not None else [])
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format="%.17g",
                                                encoding="utf-8", lineterminator="\n")
