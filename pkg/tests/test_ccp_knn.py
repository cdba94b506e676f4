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


import numpy as np
import pytest

from cyclicmono.api.ccp_knn import (default_k_grid, fit_arrays, fit_ccp, fit_ccp_cv, loo_cv_select_k, neighbour_order,
                                    predict, predict_training, select_k_arrays)
from cyclicmono.api.choice_core import logit_ccp
from cyclicmono.api.errors import InvalidInputError
from cyclicmono.api.paneldata import PanelDataset


def logit_panel(n, seed, K=2, d_x=1):
    """Panel with logit choices at utility x'beta, returned with the true probabilities."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2, K, d_x))
    p = logit_ccp(X @ np.linspace(1.0, 2.0, d_x))
    u = rng.uniform(size=(n, 2, 1))
    cumulative = np.cumsum(p, axis=-1)
    Y = np.where(u < cumulative[..., -1:], np.argmax(u < cumulative, axis=-1)[..., np.newaxis] + 1, 0)[..., 0]
    return PanelDataset(X, Y), p


class TestFit:
    """Fitting and prediction."""

    def test_k_equal_n_gives_mean(self):
        d, _ = logit_panel(3, 1)
        fit = fit_ccp(d, 1, 2, 3)
        p_s, p_t = predict(fit, np.zeros((2, 1)), np.ones((2, 1)))
        onehot = d.choice_indicators()
        np.testing.assert_allclose(p_s, onehot[:, 0].mean(axis=0))
        np.testing.assert_allclose(p_t, onehot[:, 1].mean(axis=0))

    def test_constant_coordinate_dropped(self):
        d, _ = logit_panel(50, 2)
        X = np.array(d.X)
        X[:, 0, 0, 0] = 0.3
        fit = fit_ccp(PanelDataset(X, d.Y), 1, 2, 5)
        assert fit.retained.sum() == fit.n_raw_features - 1
        assert np.all(fit.scale > 0)
        p_s, p_t = predict_training(fit)
        assert np.all(np.isfinite(p_s)) and np.all(np.isfinite(p_t))

    def test_self_is_nearest(self):
        d, _ = logit_panel(30, 3)
        fit = fit_ccp(d, 1, 2, 1)
        p_s, p_t = predict(fit, d.X[7, 0], d.X[7, 1])
        onehot = d.choice_indicators()
        np.testing.assert_array_equal(p_s, onehot[7, 0])
        np.testing.assert_array_equal(p_t, onehot[7, 1])

    def test_duplicate_rows_k1(self):
        features = np.array([[0.0], [0.0], [1.0]])
        targets = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        fit = fit_arrays(features, targets, 1)
        p_s, p_t = predict_training(fit)
        # ties go to the lower row index
        np.testing.assert_array_equal(np.column_stack([p_s, p_t])[:2], [[1.0, 0.0], [1.0, 0.0]])

    def test_hand_enumerated_neighbours(self):
        features = np.array([[0.0], [1.0], [3.0], [6.0], [10.0]])
        targets = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        fit = fit_arrays(features, targets, 2)
        query = np.array([[2.2 / fit.scale[0]]])
        order = np.argsort(np.abs(features[:, 0] - 2.2))[:2]
        expected = targets[order].mean(axis=0)
        np.testing.assert_array_equal(np.sort(neighbour_order(fit, query, 2)[0]), np.sort(order))
        np.testing.assert_allclose(fit.targets[neighbour_order(fit, query, 2)[0]].mean(axis=0), expected)

    def test_exclude_leaves_row_out(self):
        d, _ = logit_panel(30, 3)
        fit = fit_ccp(d, 1, 2, 1)
        p_s, p_t = predict(fit, d.X[7, 0], d.X[7, 1], exclude=7)
        dist = np.sum((fit.features - fit.features[7]) ** 2, axis=1)
        dist[7] = np.inf
        nearest = int(np.argmin(dist))
        np.testing.assert_array_equal(np.concatenate([p_s, p_t]), fit.targets[nearest])

    def test_predictions_are_probabilities(self):
        d, _ = logit_panel(200, 4, K=3, d_x=2)
        p_s, p_t = predict_training(fit_ccp(d, 1, 2, 15))
        for p in (p_s, p_t):
            assert np.all((p >= 0) & (p <= 1))
            assert np.all(p.sum(axis=1) <= 1 + 1e-12)

    def test_bad_arguments(self):
        d, _ = logit_panel(10, 5)
        with pytest.raises(InvalidInputError):
            fit_ccp(d, 2, 1, 3)
        with pytest.raises(InvalidInputError):
            fit_ccp(d, 1, 2, 11)
        fit = fit_ccp(d, 1, 2, 3)
        with pytest.raises(InvalidInputError):
            predict(fit, d.X[0, 0], d.X[0, 1], exclude=10)

    def test_permutation_invariance(self):
        d, _ = logit_panel(100, 6)
        features = np.concatenate([d.X[:, 0].reshape(100, -1), d.X[:, 1].reshape(100, -1)], axis=1)
        targets = np.concatenate([d.choice_indicators()[:, 0], d.choice_indicators()[:, 1]], axis=1)
        perm = np.random.default_rng(42).permutation(100)
        first = predict_training(fit_arrays(features, targets, 7))
        second = predict_training(fit_arrays(features[perm], targets[perm], 7))
        np.testing.assert_allclose(second[0], first[0][perm], atol=1e-15)
        np.testing.assert_allclose(second[1], first[1][perm], atol=1e-15)


class TestCrossValidation:
    """Leave-one-out choice of k."""

    def test_identical_targets_pick_smallest(self):
        rng = np.random.default_rng(42)
        features = rng.uniform(size=(20, 2))
        targets = np.tile([1.0, 0.0], (20, 1))
        report = select_k_arrays(features, targets, [8, 3, 5])
        assert report.cv_loss == [0.0, 0.0, 0.0]
        assert report.k_star == 3

    def test_matches_double_loop(self):
        d, _ = logit_panel(60, 7)
        grid = [1, 3, 7, 12]
        report = loo_cv_select_k(d, 1, 2, grid)
        onehot = d.choice_indicators()
        targets = np.concatenate([onehot[:, 0], onehot[:, 1]], axis=1)
        for k, loss in zip(report.k_grid, report.cv_loss):
            fit = fit_ccp(d, 1, 2, k)
            total = 0.0
            for i in range(d.n):
                p_s, p_t = predict(fit, d.X[i, 0], d.X[i, 1], exclude=i)
                total += np.sum((np.concatenate([p_s, p_t]) - targets[i]) ** 2)
            np.testing.assert_allclose(loss, total, rtol=1e-12)
        assert report.k_star == report.k_grid[int(np.argmin(report.cv_loss))]

    def test_default_grid(self):
        d, _ = logit_panel(500, 8)
        grid = default_k_grid(500)
        assert grid[0] == 8 and grid[-1] == int(np.ceil(500 ** 0.8))
        assert grid == sorted(set(grid))
        report = loo_cv_select_k(d, 1, 2)
        assert np.all(np.isfinite(report.cv_loss))
        assert report.k_star in grid

    def test_k_equal_n_rejected(self):
        d, _ = logit_panel(10, 9)
        with pytest.raises(InvalidInputError):
            loo_cv_select_k(d, 1, 2, [10])

    def test_empty_grid_rejected(self):
        d, _ = logit_panel(10, 9)
        with pytest.raises(InvalidInputError):
            loo_cv_select_k(d, 1, 2, [])

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_error_decreases_with_n(self, seed):
        errors = []
        for n in (500, 2000):
            d, p = logit_panel(n, seed)
            fit, _ = fit_ccp_cv(d, 1, 2)
            p_s, p_t = predict_training(fit)
            errors.append(np.mean((p_s - p[:, 0]) ** 2) + np.mean((p_t - p[:, 1]) ** 2))
        assert errors[1] < errors[0]
