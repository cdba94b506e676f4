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
First-stage k-nearest-neighbour estimation of pairwise conditional choice probabilities
E[Y_j | X_s = x_s, X_t = x_t] for j in {s, t}, with leave-one-out selection of k.

Features are the concatenation vec(X_s), vec(X_t) divided by their sample standard
deviation; coordinates with (near) zero deviation are left out of the metric.
Neighbour ties are broken by ascending training row index.
"""

import logging
import math
import typing
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError
from .paneldata import PanelDataset, choice_indicators

logger = logging.getLogger(__name__)

MIN_SCALE = 1e-12

# query rows per distance block, bounds memory at block * n doubles
BLOCK_ROWS = 512


@dataclass(frozen=True)
class CcpFit:
    """
    A fitted k-NN estimator for one period pair

    Attributes:
        pair: 1-based periods (s, t), s < t
        k: neighbour count
        features: n x r standardised design matrix restricted to retained coordinates
        targets: n x 2K one-hot choices, period s then period t
        scale: standard deviation of every raw feature (2 K d_x entries)
        retained: mask of raw features used in the metric
    """
    pair: typing.Tuple[int, int]
    k: int
    features: np.ndarray
    targets: np.ndarray
    scale: np.ndarray
    retained: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def K(self) -> int:
        return self.targets.shape[1] // 2

    @property
    def n_raw_features(self) -> int:
        return self.scale.shape[0]

    def standardise(self, raw: np.ndarray) -> np.ndarray:
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        if raw.shape[1] != self.n_raw_features:
            raise InvalidInputError(f"query has {raw.shape[1]} features, fit expects {self.n_raw_features}")
        return raw[:, self.retained] / self.scale[self.retained]


@dataclass(frozen=True)
class CvReport:
    k_grid: typing.List[int]
    cv_loss: typing.List[float]
    k_star: int


def pair_design(d: PanelDataset, s: int, t: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Raw features (n, 2 K d_x) and one-hot targets (n, 2K) for the 1-based pair (s, t)."""
    _check_pair(d, s, t)
    n = d.n
    X = np.asarray(d.X, dtype=float)
    features = np.concatenate([X[:, s - 1].reshape(n, -1), X[:, t - 1].reshape(n, -1)], axis=1)
    onehot = choice_indicators(d.Y, d.K)
    targets = np.concatenate([onehot[:, s - 1], onehot[:, t - 1]], axis=1)
    return features, targets


def _check_pair(d: PanelDataset, s: int, t: int):
    if not (1 <= s < t <= d.T):
        raise InvalidInputError(f"period pair must satisfy 1 <= s < t <= {d.T}, got ({s}, {t})")


def fit_arrays(features: np.ndarray, targets: np.ndarray, k: int,
               pair: typing.Tuple[int, int] = (1, 2)) -> CcpFit:
    """Fit from a raw design matrix and its targets, see fit_ccp."""
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = features.shape[0]
    if targets.shape[0] != n:
        raise InvalidInputError("features and targets must have the same number of rows")
    if not (1 <= int(k) <= n):
        raise InvalidInputError(f"k must satisfy 1 <= k <= n={n}, got {k}")
    scale = np.std(features, axis=0) if n > 0 else np.zeros(features.shape[1])
    retained = scale >= MIN_SCALE
    if not np.all(retained):
        logger.debug("pair %s: %d constant feature(s) left out of the metric", pair, int(np.sum(~retained)))
    safe_scale = np.where(retained, scale, 1.0)
    standardised = features[:, retained] / safe_scale[retained]
    return CcpFit(pair=tuple(pair), k=int(k), features=standardised, targets=targets,
                  scale=safe_scale, retained=retained)


def fit_ccp(d: PanelDataset, s: int, t: int, k: int) -> CcpFit:
    """k-NN estimator of the period-s and period-t choice probabilities, 1-based s < t."""
    features, targets = pair_design(d, s, t)
    return fit_arrays(features, targets, k, pair=(s, t))


def neighbour_order(fit: CcpFit, queries: np.ndarray, n_neighbours: int,
                    exclude: typing.Optional[np.ndarray] = None) -> np.ndarray:
    """(m, n_neighbours) training row indices ordered by distance then index; exclude holds -1 for none."""
    m = queries.shape[0]
    n = fit.n
    width = n_neighbours + (1 if exclude is not None else 0)
    width = min(width, n)
    order = np.zeros((m, n_neighbours), dtype=int)
    for start in range(0, m, BLOCK_ROWS):
        stop = min(start + BLOCK_ROWS, m)
        if fit.features.shape[1] == 0:
            dist = np.zeros((stop - start, n))
        else:
            dist = cdist(queries[start:stop], fit.features, metric="sqeuclidean")
        ranked = np.argsort(dist, axis=1, kind="stable")[:, :width]
        if exclude is None:
            order[start:stop] = ranked[:, :n_neighbours]
        else:
            for row in range(stop - start):
                candidates = ranked[row]
                candidates = candidates[candidates != exclude[start + row]]
                order[start + row] = candidates[:n_neighbours]
    return order


def predict(fit: CcpFit, x_s, x_t, exclude: typing.Optional[int] = None) -> typing.Tuple[np.ndarray, np.ndarray]:
    x_s = np.asarray(x_s, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    if x_s.shape != x_t.shape or x_s.ndim != 2 or x_s.shape[0] != fit.K:
        raise InvalidInputError(f"queries must both have shape (K={fit.K}, d_x)")
    query = fit.standardise(np.concatenate([x_s.reshape(-1), x_t.reshape(-1)]))
    if exclude is not None:
        if not (0 <= int(exclude) < fit.n):
            raise InvalidInputError(f"exclude must be a row index below n={fit.n}, got {exclude}")
        if fit.k > fit.n - 1:
            raise InvalidInputError("leaving a row out needs k <= n - 1")
        excluded = np.array([int(exclude)])
    else:
        excluded = None
    order = neighbour_order(fit, query, fit.k, excluded)
    estimate = np.clip(np.mean(fit.targets[order[0]], axis=0), 0.0, 1.0)
    return estimate[:fit.K], estimate[fit.K:]


def predict_training(fit: CcpFit) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Predictions at every training row, each row counted among its own neighbours."""
    order = neighbour_order(fit, fit.features, fit.k)
    estimate = np.clip(np.mean(fit.targets[order], axis=1), 0.0, 1.0)
    return estimate[:, :fit.K], estimate[:, fit.K:]


def default_k_grid(n: int) -> typing.List[int]:
    """
    Ten geometrically spaced neighbour counts from max(5, ceil(n^(1/3))) to ceil(n^0.8),
    deduplicated and capped at n - 1 so every entry is usable for leave-one-out
    """
    lower = max(5, math.ceil(n ** (1.0 / 3.0)))
    upper = math.ceil(n ** 0.8)
    cap = max(1, n - 1)
    if upper <= lower:
        return [min(lower, cap)]
    grid = np.unique(np.round(np.geomspace(lower, upper, 10)).astype(int))
    return sorted({int(min(k, cap)) for k in grid})


def loo_losses(features: np.ndarray, targets: np.ndarray, k_grid: typing.Sequence[int]) -> typing.List[float]:
    """Leave-one-out sum of squared errors for every k in the grid, sharing one neighbour search."""
    fit = fit_arrays(features, targets, 1)
    n = fit.n
    k_max = max(k_grid)
    order = neighbour_order(fit, fit.features, k_max, exclude=np.arange(n))
    running = np.cumsum(fit.targets[order], axis=1)
    losses = []
    for k in k_grid:
        estimate = np.clip(running[:, k - 1] / k, 0.0, 1.0)
        losses.append(float(np.sum((estimate - fit.targets) ** 2)))
    return losses


def select_k_arrays(features: np.ndarray, targets: np.ndarray, k_grid: typing.Sequence[int]) -> CvReport:
    if k_grid is None or len(k_grid) == 0:
        raise InvalidInputError("k_grid must not be empty")
    n = np.asarray(features).shape[0]
    grid = sorted({int(k) for k in k_grid})
    if grid[0] < 1 or grid[-1] > n - 1:
        raise InvalidInputError(f"every k in the grid must satisfy 1 <= k <= n - 1 = {n - 1}")
    losses = loo_losses(features, targets, grid)
    if not np.all(np.isfinite(losses)):
        raise InvalidInputError("non-finite cross-validation loss")
    k_star = grid[int(np.argmin(losses))]
    return CvReport(k_grid=grid, cv_loss=losses, k_star=k_star)


def loo_cv_select_k(d: PanelDataset, s: int, t: int,
                    k_grid: typing.Optional[typing.Sequence[int]] = None) -> CvReport:
    """Choose k by leave-one-out cross-validation; ties go to the smallest k."""
    features, targets = pair_design(d, s, t)
    if k_grid is None:
        k_grid = default_k_grid(d.n)
    report = select_k_arrays(features, targets, k_grid)
    logger.debug("pair (%d, %d): k*=%d over grid %s", s, t, report.k_star, report.k_grid)
    return report


def fit_ccp_cv(d: PanelDataset, s: int, t: int,
               k_grid: typing.Optional[typing.Sequence[int]] = None) -> typing.Tuple[CcpFit, CvReport]:
    """Select k by leave-one-out cross-validation and fit with it."""
    report = loo_cv_select_k(d, s, t, k_grid)
    return fit_ccp(d, s, t, report.k_star), report
