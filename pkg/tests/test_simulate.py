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
import pandas as pd
import pytest
from scipy import stats

from cyclicmono.api.errors import InvalidInputError, NumericalError
from cyclicmono.api.estimation import estimate_panel, estimate_panel_matched
from cyclicmono.api.identset import illustration_dgp
from cyclicmono.api.optimizer import EstimatorOptions
from cyclicmono.api.simulate import (DEFAULT_CORRELATION, AggregateDgpConfig, McDgpConfig, McTable, draw_panel,
                                     render_tables, replication_seed, run_monte_carlo, run_replication, run_study,
                                     simulate_aggregate, simulate_discrete_panel, simulate_panel, write_tables_csv)

QUICK = EstimatorOptions(max_iter=400, stall_window=100, n_restarts=1)


def binned_choice_oracle(rng, size, beta, corr, low=0.9):
    """Period-1 choice shares of the panel design with the first covariate of option 1 restricted to [low, 1]."""
    X = rng.uniform(size=(size, 2, 3))
    X[:, 0, 0] = rng.uniform(low, 1.0, size=size)
    A = (rng.uniform(size=(size, 2)) + X.sum(axis=-1)) / 4.0
    u = rng.multivariate_normal(np.zeros(3), corr, size=size)
    utility = np.zeros((size, 3))
    utility[:, 1:] = X @ beta + A + A * (u[:, 1:] - u[:, :1])
    return np.bincount(np.argmax(utility, axis=1), minlength=3) / size


class TestSimulatePanel:
    """The panel design."""

    def test_deterministic(self):
        first = simulate_panel(McDgpConfig(n=50, seed=3))
        second = simulate_panel(McDgpConfig(n=50, seed=3))
        other = simulate_panel(McDgpConfig(n=50, seed=4))
        np.testing.assert_array_equal(first.X, second.X)
        np.testing.assert_array_equal(first.Y, second.Y)
        assert not np.array_equal(first.X, other.X)

    def test_shapes(self):
        d = simulate_panel(McDgpConfig(n=40, T=3, K=2, d_x=3))
        assert d.X.shape == (40, 3, 2, 3)
        assert d.Y.shape == (40, 3)
        assert set(np.unique(d.Y)) <= {0, 1, 2}
        assert d.Z is None

    def test_covariates_uniform(self):
        d = simulate_panel(McDgpConfig(n=100_000, T=1, seed=1))
        for k in range(2):
            for j in range(3):
                assert stats.kstest(d.X[:, 0, k, j], "uniform").statistic < 0.01

    def test_errors_scale_with_fixed_effect(self):
        draws = draw_panel(McDgpConfig(n=100_000, seed=6))
        a = np.repeat(draws.A[:, 0], 2)
        e = draws.eps[..., 0].reshape(-1)
        edges = np.quantile(a, np.linspace(0.0, 1.0, 11))
        decile = np.clip(np.searchsorted(edges, a, side="right") - 1, 0, 9)
        variances = np.array([np.var(e[decile == q]) for q in range(10)])
        assert np.all(np.diff(variances) > 0)

    def test_homoskedastic_errors_do_not_scale(self):
        draws = draw_panel(McDgpConfig(n=20_000, seed=6, heteroskedastic=False))
        np.testing.assert_allclose(np.var(draws.eps[..., 0]), 2.0, rtol=0.05)

    def test_choice_frequencies_in_covariate_bin(self):
        cfg = McDgpConfig(n=100_000, seed=8)
        d = simulate_panel(cfg)
        rows = d.X[:, 0, 0, 0] >= 0.9
        observed = np.bincount(d.Y[rows, 0], minlength=3) / np.sum(rows)
        expected = binned_choice_oracle(np.random.default_rng(42), 200_000, np.asarray(cfg.beta),
                                        np.asarray(DEFAULT_CORRELATION))
        np.testing.assert_allclose(observed, expected, atol=0.02)

    def test_symmetric_design_shares(self):
        cfg = McDgpConfig(n=100_000, T=1, beta=(0.0, 0.0, 0.0), corr=np.eye(3).tolist(), seed=5,
                          fixed_effects=False, heteroskedastic=False)
        d = simulate_panel(cfg)
        shares = np.bincount(d.Y.ravel(), minlength=3) / d.Y.size
        np.testing.assert_allclose(shares, 1 / 3, atol=0.01)

    def test_bad_correlation(self):
        with pytest.raises(InvalidInputError):
            McDgpConfig(n=10, corr=((1.0, 2.0, 0.0), (2.0, 1.0, 0.0), (0.0, 0.0, 1.0)))
        with pytest.raises(InvalidInputError):
            McDgpConfig(n=10, corr=((1.0, 0.0), (0.0, 1.0)))

    def test_control_shift(self):
        base = simulate_panel(McDgpConfig(n=3000, seed=2))
        shifted = simulate_panel(McDgpConfig(n=3000, seed=2, control_shift=2.0))
        assert shifted.has_controls
        assert set(np.unique(shifted.Z)) == {0, 1}
        np.testing.assert_array_equal(base.X, shifted.X)
        treated = shifted.Z == 1
        assert np.mean(shifted.Y[treated] == 1) > np.mean(base.Y[treated] == 1)
        np.testing.assert_array_equal(base.Y[~treated], shifted.Y[~treated])

    def test_discrete_design(self):
        dgp = illustration_dgp(3)
        d = simulate_discrete_panel(dgp, 200, seed=1)
        assert d.X.shape == (200, 2, 2, 3)
        assert dgp.in_support(d.X)
        assert set(np.unique(d.Y)) <= {0, 1, 2}


class TestSimulateAggregate:
    """Market shares."""

    def test_exact_shares(self):
        d = simulate_aggregate(AggregateDgpConfig(C=20, T=3, seed=1))
        assert d.S.shape == (20, 3, 2)
        assert np.all(d.S > 0)
        assert np.all(d.S.sum(axis=-1) < 1)
        assert d.n_ct is None

    def test_sampled_shares(self):
        d = simulate_aggregate(AggregateDgpConfig(C=20, consumers=50, seed=1))
        np.testing.assert_array_equal(d.n_ct, 50)
        np.testing.assert_allclose(d.S * 50, np.round(d.S * 50), atol=1e-9)
        assert np.all(d.S.sum(axis=-1) <= 1 + 1e-12)


class TestMcTable:
    """Summary statistics."""

    def test_rmse_identity(self):
        estimates = np.array([[0.9, 0.4, 0.1], [0.8, 0.6, -0.2], [1.0, 0.5, 0.0]])
        truth = np.array([0.9, 0.45, 0.0])
        table = McTable.from_estimates(estimates, truth, n=10, seed=0)
        np.testing.assert_allclose(table.rmse ** 2, table.bias ** 2 + table.sd ** 2, atol=1e-15)
        np.testing.assert_allclose(table.bias, estimates.mean(axis=0) - truth)
        assert table.reps == 3

    def test_too_few(self):
        with pytest.raises(NumericalError):
            McTable.from_estimates(np.ones((1, 3)), np.ones(3), n=10, seed=0)

    def test_render_and_write(self, tmp_path):
        estimates = np.array([[0.9, 0.4, 0.1], [0.8, 0.6, -0.2]])
        tables = [McTable.from_estimates(estimates, np.array([0.9, 0.45, 0.0]), n=n, seed=0) for n in (250, 500)]
        text = render_tables(tables)
        assert "BIAS" in text and "rMSE" in text
        assert text.rstrip().endswith("(2 repetitions, 0 failed)")
        path = tmp_path / "mc.csv"
        write_tables_csv(tables, path)
        df = pd.read_csv(path)
        assert list(df.columns) == ["n", "coordinate", "BIAS", "SD", "rMSE", "reps", "failed"]
        assert len(df) == 6


class TestMonteCarlo:
    """Replication harness."""

    def test_replication_seeds(self):
        seeds = [replication_seed(7, rep) for rep in range(20)]
        assert len(set(seeds)) == 20
        assert seeds == [replication_seed(7, rep) for rep in range(20)]

    def test_two_replications(self):
        cfg = McDgpConfig(n=150, seed=9)
        table = run_monte_carlo(cfg, 2, QUICK)
        assert table.reps == 2
        assert table.estimates.shape == (2 - table.n_failed, 3)
        np.testing.assert_allclose(np.linalg.norm(table.estimates, axis=1), 1.0, atol=1e-9)

    def test_replication_rerun_alone(self):
        cfg = McDgpConfig(n=150, seed=9)
        table = run_monte_carlo(cfg, 3, QUICK)
        assert table.n_failed == 0
        np.testing.assert_allclose(run_replication(cfg, 1, QUICK), table.estimates[1], atol=1e-12)

    def test_parallel_matches_sequential(self):
        cfg = McDgpConfig(n=120, seed=4)
        sequential = run_monte_carlo(cfg, 3, QUICK)
        parallel = run_monte_carlo(cfg, 3, QUICK, n_jobs=2)
        np.testing.assert_allclose(parallel.estimates, sequential.estimates, atol=1e-12)

    def test_needs_two(self):
        with pytest.raises(InvalidInputError):
            run_monte_carlo(McDgpConfig(n=50), 1, QUICK)

    @pytest.mark.slow
    def test_precision_improves_with_n(self):
        small, large = run_study([250, 1000], 200, McDgpConfig(n=250, seed=1), EstimatorOptions(), n_jobs=-1)
        assert small.n_failed == 0 and large.n_failed == 0
        assert abs(small.bias[0]) < 0.05
        assert small.sd[0] < 0.15
        assert np.all(large.sd < small.sd)
        for table in (small, large):
            np.testing.assert_allclose(table.rmse ** 2, table.bias ** 2 + table.sd ** 2, atol=1e-15)


@pytest.mark.slow
class TestControlMatching:
    """Estimation within control cells."""

    def test_matching_removes_control_bias(self, angle):
        matched, plain = [], []
        for seed in range(5):
            cfg = McDgpConfig(n=4000, seed=seed, control_shift=1.0)
            d = simulate_panel(cfg)
            result, terms = estimate_panel_matched(d, EstimatorOptions())
            assert not terms.is_empty
            matched.append(angle(result.beta_hat, cfg.truth))
            result, _ = estimate_panel(d, EstimatorOptions())
            plain.append(angle(result.beta_hat, cfg.truth))
        assert max(matched) < 15.0
        assert np.median(matched) < np.median(plain)
