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

from cyclicmono.api.errors import InvalidInputError, NumericalError
from cyclicmono.api.moments import TermSet, build_terms, fit_all_pairs, q_n
from cyclicmono.api.optimizer import (UNIDENTIFIED_NOTE, EstimatorOptions, FaceProblem, all_faces, estimate_beta,
                                      format_result, grid_oracle, minimize_face, parse_result, read_result,
                                      write_result)
from cyclicmono.api.paneldata import PanelDataset


def random_terms(seed, d_x, n=40, pairs=((1, 2),)):
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d_x)
    return TermSet.from_arrays({pair: rng.standard_normal((n, d_x)) + 0.5 * direction for pair in pairs})


class TestFaces:
    """Face enumeration and single-face minimisation."""

    def test_order(self):
        faces = all_faces(2)
        assert [(f.j, f.sign) for f in faces] == [(0, 1), (0, -1), (1, 1), (1, -1)]

    def test_invalid_face(self):
        with pytest.raises(InvalidInputError):
            FaceProblem(3, 1, 3)
        with pytest.raises(InvalidInputError):
            FaceProblem(0, 0, 3)

    def test_zero_terms_return_start(self):
        terms = TermSet.from_arrays({(1, 2): np.zeros((5, 3))})
        solution = minimize_face(terms, FaceProblem(0, 1, 3))
        assert solution.value == 0.0
        np.testing.assert_array_equal(solution.b, [1.0, 0.0, 0.0])
        assert solution.converged

    def test_single_term_feasible(self):
        terms = TermSet.from_arrays({(1, 2): [[0.0, 1.0]]})
        solution = minimize_face(terms, FaceProblem(0, 1, 2))
        assert solution.value == 0.0
        assert solution.b[1] >= -1e-6

    @pytest.mark.parametrize("method", ["subgradient", "lp"])
    def test_matches_grid_search(self, method):
        terms = random_terms(42, 2)
        grid = np.linspace(-1, 1, 2001)
        best = min(q_n([1.0, b2], terms) for b2 in grid)
        solution = minimize_face(terms, FaceProblem(0, 1, 2), EstimatorOptions(method=method))
        assert solution.value <= best + 1e-3
        assert solution.b[0] == 1.0
        assert np.all(np.abs(solution.b) <= 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            minimize_face(random_terms(1, 2), FaceProblem(0, 1, 3))


class TestEstimateBeta:
    """Minimisation over the whole max-norm sphere."""

    def test_one_direction_cone(self):
        rng = np.random.default_rng(42)
        v = rng.standard_normal(3)
        terms = TermSet.from_arrays({(1, 2): rng.uniform(0.1, 2.0, size=(20, 1)) * v})
        result = estimate_beta(terms)
        assert result.qn_value == 0.0
        assert result.beta_hat @ v >= -1e-12

    def test_zero_terms_flagged(self):
        terms = TermSet.from_arrays({(1, 2): np.zeros((5, 3))})
        result = estimate_beta(terms)
        assert result.qn_value == 0.0
        assert result.converged
        assert UNIDENTIFIED_NOTE in result.diagnostics
        assert not result.identified
        assert result.face == (0, 1)

    def test_normalisation(self):
        result = estimate_beta(random_terms(3, 3, pairs=((1, 2), (1, 3))))
        assert np.max(np.abs(result.beta_tilde)) == 1.0
        assert abs(np.linalg.norm(result.beta_hat) - 1.0) < 1e-12
        np.testing.assert_allclose(result.beta_hat, result.beta_tilde / np.linalg.norm(result.beta_tilde))
        assert result.identified

    def test_qn_value_consistent(self):
        terms = random_terms(4, 3)
        result = estimate_beta(terms)
        assert abs(result.qn_value - q_n(result.beta_tilde, terms)) <= 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_against_oracle_2d(self, seed):
        terms = random_terms(seed, 2)
        result = estimate_beta(terms)
        _, oracle = grid_oracle(terms, 3600)
        assert result.qn_value <= oracle + 1e-2

    @pytest.mark.parametrize("seed", range(3))
    def test_against_oracle_3d(self, seed):
        terms = random_terms(100 + seed, 3, pairs=((1, 2), (2, 3)))
        result = estimate_beta(terms)
        _, oracle = grid_oracle(terms, 120)
        assert result.qn_value <= oracle + 1e-2

    def test_lp_agrees_with_subgradient(self):
        terms = random_terms(7, 3)
        subgradient = estimate_beta(terms)
        exact = estimate_beta(terms, EstimatorOptions(method="lp"))
        assert exact.qn_value <= subgradient.qn_value + 1e-9
        assert subgradient.qn_value <= exact.qn_value + 1e-3

    def test_scale_invariance(self):
        terms = random_terms(8, 3)
        results = [estimate_beta(terms.scaled(scale)) for scale in (0.1, 1.0, 10.0)]
        for result in results[1:]:
            np.testing.assert_allclose(result.beta_hat, results[0].beta_hat, atol=1e-6)

    def test_parallel_matches_sequential(self):
        terms = random_terms(9, 3, pairs=((1, 2), (1, 3)))
        sequential = estimate_beta(terms, EstimatorOptions(n_jobs=1))
        parallel = estimate_beta(terms, EstimatorOptions(n_jobs=3))
        assert format_result(sequential) == format_result(parallel)

    def test_empty_terms(self):
        with pytest.raises(NumericalError):
            estimate_beta(TermSet(2, {(1, 2): np.zeros((0, 2))}))

    def test_unknown_method(self):
        with pytest.raises(InvalidInputError):
            EstimatorOptions(method="newton")


class TestGridOracle:
    """Exhaustive angular search."""

    def test_zero_terms(self):
        _, value = grid_oracle(TermSet.from_arrays({(1, 2): np.zeros((3, 2))}), 360)
        assert value == 0.0

    def test_single_term(self):
        b, value = grid_oracle(TermSet.from_arrays({(1, 2): [[1.0, 0.0]]}), 3600)
        assert value == 0.0
        assert b @ np.array([1.0, 0.0]) >= 0.0

    def test_dimension_limit(self):
        with pytest.raises(InvalidInputError):
            grid_oracle(TermSet.from_arrays({(1, 2): np.ones((3, 4))}), 10)

    def test_scales(self):
        terms = random_terms(5, 2)
        b_max, value_max = grid_oracle(terms, 720, scale="max")
        b_euc, value_euc = grid_oracle(terms, 720, scale="euclidean")
        assert value_euc <= value_max + 1e-15
        np.testing.assert_allclose(q_n(b_euc, terms), value_euc, atol=1e-12)


class TestResultDocument:
    """Key = value serialisation of an estimate."""

    def test_keys(self):
        text = format_result(estimate_beta(random_terms(6, 2)))
        keys = [line.split("=")[0].strip() for line in text.splitlines() if not line.startswith("#")]
        assert keys == ["beta_tilde", "beta_hat", "qn_value", "face_j", "face_sign", "iterations", "converged"]

    def test_read_back(self, tmp_path):
        result = estimate_beta(TermSet.from_arrays({(1, 2): np.zeros((2, 2))}))
        path = tmp_path / "result.txt"
        write_result(result, path)
        back = read_result(path)
        np.testing.assert_array_equal(back.beta_hat, result.beta_hat)
        assert back.face == result.face
        assert back.diagnostics == result.diagnostics
        assert back.qn_value == result.qn_value

    def test_missing_key(self):
        with pytest.raises(InvalidInputError):
            parse_result("beta_hat = 1.0 0.0\n")


@pytest.mark.slow
class TestLogitRecovery:
    """Estimation on terms from a logit panel with fixed effects."""

    def test_direction_recovered(self, angle):
        rng = np.random.default_rng(42)
        n, beta = 2000, np.array([1.0, 0.5, 0.0])
        X = rng.uniform(size=(n, 2, 2, 3))
        A = (rng.uniform(size=(n, 2)) + X[:, 0].sum(axis=-1)) / 4.0
        shocks = rng.gumbel(size=(n, 2, 3))
        v = X @ beta + A[:, np.newaxis, :] + shocks[..., 1:] - shocks[..., :1]
        d = PanelDataset(X, np.where(v.max(axis=-1) > 0, v.argmax(axis=-1) + 1, 0))
        result = estimate_beta(build_terms(d, fit_all_pairs(d)))
        assert result.identified
        assert angle(result.beta_hat, beta) < 15.0
