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

from cyclicmono.api.errors import DataFormatError, InvalidInputError
from cyclicmono.api.paneldata import (ERROR, WARNING, PanelDataset, read_panel, read_panel_csv, validate, write_panel,
                                      write_panel_csv)
from cyclicmono.api.simulate import McDgpConfig, simulate_panel

HANDCRAFTED = """id,period,choice,x_1_1,x_2_1
a,1,1,0.5,1.5
a,2,2,1.0,2.0
b,1,0,0.25,0.75
b,2,1,3.0,4.0
"""


def write_text(tmp_path, text, name="panel.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestPanelDataset:
    """Construction and derived views."""

    def test_shapes(self, small_panel):
        assert (small_panel.n, small_panel.T, small_panel.K, small_panel.d_x) == (2, 2, 2, 1)
        assert small_panel.pairs() == [(1, 2)]
        assert not small_panel.has_controls

    def test_pairs_for_three_periods(self):
        d = PanelDataset(np.zeros((3, 3, 1, 1)), np.zeros((3, 3), dtype=int))
        assert d.pairs() == [(1, 2), (1, 3), (2, 3)]

    def test_immutable(self, small_panel):
        with pytest.raises(ValueError):
            small_panel.X[0, 0, 0, 0] = 1.0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            PanelDataset(np.zeros((2, 2, 1, 1)), np.zeros((2, 3), dtype=int))

    def test_subset_keeps_ids(self, small_panel):
        sub = small_panel.subset([1])
        assert sub.n == 1
        assert list(sub.ids) == ["2"]


class TestValidate:
    """Report-based validation."""

    def test_simulated_ok(self):
        report = validate(simulate_panel(McDgpConfig(n=200, seed=3)))
        assert report.ok
        assert report.errors() == []

    def test_label_out_of_range(self, small_panel):
        Y = np.array(small_panel.Y)
        Y[1, 0] = small_panel.K + 1
        report = validate(PanelDataset(small_panel.X, Y))
        assert not report.ok
        assert any(issue.location == "id=2 period=1" for issue in report.errors())

    def test_constant_covariate_warning(self):
        X = np.ones((4, 2, 2, 2))
        X[..., 1] = np.arange(4 * 2 * 2).reshape(4, 2, 2)
        report = validate(PanelDataset(X, np.zeros((4, 2), dtype=int)))
        assert report.ok
        messages = [issue.message for issue in report.warnings()]
        assert any("time-invariant covariate not identified" in m for m in messages)

    def test_single_period(self):
        report = validate(PanelDataset(np.zeros((3, 1, 1, 1)), np.zeros((3, 1), dtype=int)))
        assert not report.ok

    def test_non_finite_covariate(self, small_panel):
        X = np.array(small_panel.X)
        X[0, 1, 0, 0] = np.nan
        report = validate(PanelDataset(X, small_panel.Y))
        assert [issue.location for issue in report.errors()] == ["id=1 period=2"]

    def test_never_raises_on_garbage(self):
        X = np.full((2, 2, 1, 1), np.inf)
        Y = np.array([[0.5, -3], [np.nan, 9]])
        report = validate(PanelDataset(X, Y))
        assert not report.ok
        assert all(issue.severity in (ERROR, WARNING, "info") for issue in report.issues)


class TestPanelCsv:
    """Long-format CSV reading and writing."""

    def test_handcrafted(self, tmp_path):
        d = read_panel_csv(write_text(tmp_path, HANDCRAFTED))
        assert d.n == 2 and d.T == 2 and d.K == 2 and d.d_x == 1
        assert list(d.ids) == ["a", "b"]
        np.testing.assert_array_equal(d.Y, [[1, 2], [0, 1]])
        np.testing.assert_array_equal(d.X[1, 1, :, 0], [3.0, 4.0])

    def test_row_order_does_not_matter(self, tmp_path):
        lines = HANDCRAFTED.strip().split("\n")
        shuffled = "\n".join([lines[0], lines[2], lines[4], lines[1], lines[3]]) + "\n"
        d = read_panel_csv(write_text(tmp_path, shuffled))
        np.testing.assert_array_equal(d.Y, [[1, 2], [0, 1]])

    def test_ragged(self, tmp_path):
        text = "\n".join(HANDCRAFTED.strip().split("\n")[:-1]) + "\n"
        with pytest.raises(DataFormatError, match="ragged"):
            read_panel_csv(write_text(tmp_path, text))

    def test_duplicate_row(self, tmp_path):
        text = HANDCRAFTED + "a,2,1,1.0,2.0\n"
        with pytest.raises(DataFormatError, match="row 6"):
            read_panel_csv(write_text(tmp_path, text))

    def test_missing_column(self, tmp_path):
        text = HANDCRAFTED.replace("choice", "chosen")
        with pytest.raises(DataFormatError, match="choice"):
            read_panel_csv(write_text(tmp_path, text))

    def test_non_integer_choice(self, tmp_path):
        text = HANDCRAFTED.replace("b,1,0,", "b,1,0.5,")
        with pytest.raises(DataFormatError, match="row 4"):
            read_panel_csv(write_text(tmp_path, text))

    def test_round_trip(self, tmp_path):
        d = simulate_panel(McDgpConfig(n=500, seed=5))
        first = tmp_path / "first.csv"
        second = tmp_path / "second.csv"
        write_panel_csv(d, first)
        back = read_panel_csv(first)
        np.testing.assert_array_equal(back.X, d.X)
        np.testing.assert_array_equal(back.Y, d.Y)
        write_panel_csv(back, second)
        assert first.read_bytes() == second.read_bytes()

    def test_round_trip_with_controls(self, tmp_path):
        d = simulate_panel(McDgpConfig(n=50, seed=5, control_shift=3.0))
        path = tmp_path / "controls.csv"
        write_panel_csv(d, path)
        back = read_panel_csv(path)
        np.testing.assert_array_equal(back.Z, d.Z)


class TestPanelNetcdf:
    """NetCDF form of a panel."""

    def test_round_trip(self, tmp_path):
        d = simulate_panel(McDgpConfig(n=40, seed=2, control_shift=1.0))
        path = tmp_path / "panel.nc"
        write_panel(d, path)
        back = read_panel(path)
        np.testing.assert_array_equal(back.X, d.X)
        np.testing.assert_array_equal(back.Y, d.Y)
        np.testing.assert_array_equal(back.Z, d.Z)
        assert list(back.ids) == list(d.ids)
