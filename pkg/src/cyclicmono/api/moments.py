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
Length-2 cycle moment terms g_i = (X_is - X_it)'(p_s - p_t) and the convex objective

    Q_n(b) = max over pairs (s, t) of mean_i [b'g_i]_-,   [x]_- = |min(x, 0)|

together with a deterministic subgradient. Control matching builds terms only from
individuals whose discrete control Z is equal in both periods of a pair.
"""

import logging
import typing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .ccp_knn import CcpFit, default_k_grid, fit_ccp_cv, predict_training
from .errors import InvalidInputError
from .paneldata import PanelDataset

logger = logging.getLogger(__name__)

Pair = typing.Tuple[int, int]


@dataclass(frozen=True)
class MomentTerm:
    g: np.ndarray
    pair: Pair
    individual: int


@dataclass(frozen=True)
class TermSet:
    """
    Moment terms grouped by period pair

    Attributes:
        d_x: covariate dimension
        g_by_pair: for each pair (s, t) an (n_pair, d_x) array of terms
        individuals_by_pair: for each pair the row index (individual or market) of every term
    """
    d_x: int
    g_by_pair: typing.Dict[Pair, np.ndarray] = field(default_factory=dict)
    individuals_by_pair: typing.Dict[Pair, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for pair, g in list(self.g_by_pair.items()):
            if not pair[0] < pair[1]:
                raise InvalidInputError(f"pair keys must have s < t, got {pair}")
            g = np.asarray(g, dtype=float).reshape(-1, self.d_x)
            if not np.all(np.isfinite(g)):
                raise InvalidInputError(f"non-finite moment term for pair {pair}")
            g.setflags(write=False)
            self.g_by_pair[pair] = g
            if pair not in self.individuals_by_pair:
                self.individuals_by_pair[pair] = np.arange(g.shape[0])

    @staticmethod
    def from_arrays(by_pair: typing.Dict[Pair, typing.Any], d_x: typing.Optional[int] = None) -> "TermSet":
        """Build a TermSet from plain per-pair arrays (or nested lists) of terms."""
        arrays = {pair: np.asarray(g, dtype=float) for (pair, g) in by_pair.items()}
        if d_x is None:
            shapes = [g.shape[-1] for g in arrays.values() if g.ndim == 2 and g.size > 0]
            if not shapes:
                raise InvalidInputError("cannot infer d_x from empty terms")
            d_x = shapes[0]
        return TermSet(d_x=d_x, g_by_pair={pair: g.reshape(-1, d_x) for (pair, g) in arrays.items()})

    @property
    def pairs(self) -> typing.List[Pair]:
        return sorted(self.g_by_pair)

    @property
    def n(self) -> typing.Dict[Pair, int]:
        return {pair: self.g_by_pair[pair].shape[0] for pair in self.pairs}

    @property
    def is_empty(self) -> bool:
        return all(count == 0 for count in self.n.values())

    def terms(self, pair: Pair) -> typing.List[MomentTerm]:
        g = self.g_by_pair[pair]
        individuals = self.individuals_by_pair[pair]
        return [MomentTerm(g[i], pair, int(individuals[i])) for i in range(g.shape[0])]

    @property
    def by_pair(self) -> typing.Dict[Pair, typing.List[MomentTerm]]:
        return {pair: self.terms(pair) for pair in self.pairs}

    def scaled(self, factor: float) -> "TermSet":
        return TermSet(self.d_x, {pair: self.g_by_pair[pair] * factor for pair in self.pairs},
                       dict(self.individuals_by_pair))

    def all_zero(self) -> bool:
        return all(not np.any(self.g_by_pair[pair]) for pair in self.pairs)


def pair_terms(X: np.ndarray, s: int, t: int, p_s: np.ndarray, p_t: np.ndarray) -> np.ndarray:
    """g_i = (X_is - X_it)'(p_s - p_t), X of shape (n, T, K, d_x), probabilities (n, K)."""
    dX = X[:, s - 1] - X[:, t - 1]
    return np.einsum("nkj,nk->nj", dX, p_s - p_t)


def build_terms(d: PanelDataset, ccp_fits: typing.Dict[Pair, CcpFit]) -> TermSet:
    """Length-2 cycle terms for every individual and every pair s < t."""
    X = np.asarray(d.X, dtype=float)
    g_by_pair = {}
    individuals_by_pair = {}
    for (s, t) in d.pairs():
        fit = ccp_fits.get((s, t))
        if fit is None:
            raise InvalidInputError(f"missing first-stage fit for pair ({s}, {t})")
        if fit.n != d.n:
            raise InvalidInputError(f"fit for pair ({s}, {t}) has {fit.n} rows, dataset has {d.n}")
        p_s, p_t = predict_training(fit)
        g_by_pair[(s, t)] = pair_terms(X, s, t, p_s, p_t)
        individuals_by_pair[(s, t)] = np.arange(d.n)
    return TermSet(d.d_x, g_by_pair, individuals_by_pair)


def fit_all_pairs(d: PanelDataset, k_grid=None) -> typing.Dict[Pair, CcpFit]:
    """First-stage fits with leave-one-out selected k for every pair of the panel."""
    fits = {}
    for (s, t) in d.pairs():
        fit, report = fit_ccp_cv(d, s, t, k_grid)
        logger.info("pair (%d, %d): k=%d selected by leave-one-out", s, t, report.k_star)
        fits[(s, t)] = fit
    return fits


def matched_cells(d: PanelDataset, s: int, t: int) -> typing.Dict[int, np.ndarray]:
    """Row indices of individuals with Z_s = Z_t, grouped by that control value."""
    if d.Z is None:
        raise InvalidInputError("control matching needs a dataset with controls Z")
    z_s = np.asarray(d.Z[:, s - 1])
    z_t = np.asarray(d.Z[:, t - 1])
    matched = z_s == z_t
    return {int(z): np.nonzero(matched & (z_s == z))[0] for z in np.unique(z_s[matched])}


def build_terms_matched(d: PanelDataset,
                        ccp_fits_per_cell: typing.Optional[typing.Dict[typing.Tuple[Pair, int], CcpFit]] = None,
                        k_grid: typing.Optional[typing.Sequence[int]] = None) -> TermSet:
    """
    Terms from individuals whose control is unchanged between the two periods of a pair

    First-stage fits are estimated within each (pair, Z value) cell. Individuals with
    Z_s != Z_t are dropped for that pair.

    Arguments:
        d: a panel with controls
        ccp_fits_per_cell: optional fits keyed by ((s, t), z); missing cells are fitted
            here with leave-one-out selection over k_grid
        k_grid: candidate neighbour counts for cells fitted here (default grid when None);
            entries above the cell size minus one are dropped and a cell left with no
            usable k is skipped with a warning

    Returns:
        the TermSet; a pair with no matched individuals has an empty term list
    """
    if d.Z is None:
        raise InvalidInputError("control matching needs a dataset with controls Z")
    ccp_fits_per_cell = ccp_fits_per_cell or {}
    X = np.asarray(d.X, dtype=float)
    g_by_pair = {}
    individuals_by_pair = {}
    for (s, t) in d.pairs():
        pieces = []
        rows_used = []
        for z, rows in matched_cells(d, s, t).items():
            fit = ccp_fits_per_cell.get(((s, t), z))
            if fit is None:
                grid = k_grid if k_grid is not None else default_k_grid(len(rows))
                usable = [k for k in grid if k <= len(rows) - 1]
                if not usable:
                    logger.warning("pair (%d, %d): control cell z=%d has %d observations, "
                                   "too few for the smallest k; skipped", s, t, z, len(rows))
                    continue
                fit, _ = fit_ccp_cv(d.subset(rows), s, t, usable)
            elif fit.n != len(rows):
                raise InvalidInputError(f"fit for pair ({s}, {t}) cell z={z} has {fit.n} rows, cell has {len(rows)}")
            p_s, p_t = predict_training(fit)
            pieces.append(pair_terms(X[rows], s, t, p_s, p_t))
            rows_used.append(rows)
        if pieces:
            g_by_pair[(s, t)] = np.concatenate(pieces, axis=0)
            individuals_by_pair[(s, t)] = np.concatenate(rows_used)
        else:
            logger.warning("pair (%d, %d): no individual has an unchanged control; no terms", s, t)
            g_by_pair[(s, t)] = np.zeros((0, d.d_x))
            individuals_by_pair[(s, t)] = np.zeros(0, dtype=int)
    return TermSet(d.d_x, g_by_pair, individuals_by_pair)


def _hinge(x: np.ndarray) -> np.ndarray:
    """[x]_-, the negative part."""
    return np.maximum(-x, 0.0)


def _pair_values(b: np.ndarray, terms: TermSet) -> typing.List[typing.Tuple[Pair, float]]:
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != terms.d_x:
        raise InvalidInputError(f"b has dimension {b.shape[0]}, terms have d_x={terms.d_x}")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("b must be finite")
    if terms.is_empty:
        raise InvalidInputError("the objective needs at least one moment term")
    values = []
    for pair in terms.pairs:
        g = terms.g_by_pair[pair]
        if g.shape[0] == 0:
            continue
        values.append((pair, float(np.mean(_hinge(g @ b)))))
    return values


def value_and_subgradient(b, terms: TermSet) -> typing.Tuple[float, np.ndarray]:
    """q_n(b) and subgradient(b) from a single pass over the terms."""
    b = np.asarray(b, dtype=float).reshape(-1)
    values = _pair_values(b, terms)
    top = max(value for (_, value) in values)
    pair = next(p for (p, value) in values if value == top)
    g = terms.g_by_pair[pair]
    violated = (g @ b) < 0
    return top, -np.sum(g[violated], axis=0) / g.shape[0]


def q_n(b, terms: TermSet) -> float:
    """The objective: the largest per-pair average of [b'g_i]_-; always >= 0."""
    return max(value for (_, value) in _pair_values(b, terms))


def subgradient(b, terms: TermSet) -> np.ndarray:
    """
    A subgradient of q_n at b

    Uses the first pair (in (s, t) order) attaining the maximum and returns
    -(1/n_pair) * sum of g_i over terms with b'g_i < 0.
    """
    return value_and_subgradient(b, terms)[1]


def export_terms_csv(terms: TermSet, path):
    """Write terms as CSV with columns pair_s, pair_t, id, g_1..g_dx."""
    frames = []
    for (s, t) in terms.pairs:
        g = terms.g_by_pair[(s, t)]
        frame = pd.DataFrame(g, columns=[f"g_{j + 1}" for j in range(terms.d_x)])
        frame.insert(0, "id", terms.individuals_by_pair[(s, t)])
        frame.insert(0, "pair_t", t)
        frame.insert(0, "pair_s", s)
        frames.append(frame)
    columns = ["pair_s", "pair_t", "id"] + [f"g_{j + 1}" for j in range(terms.d_x)]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
