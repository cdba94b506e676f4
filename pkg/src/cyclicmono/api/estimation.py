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

"""Two-step estimation from a panel: k-NN first stage, moment terms, face-wise minimisation."""

import logging
import typing

from .errors import NumericalError
from .moments import TermSet, build_terms, build_terms_matched, fit_all_pairs
from .optimizer import EstimateResult, EstimatorOptions, estimate_beta
from .paneldata import PanelDataset

logger = logging.getLogger(__name__)


def panel_terms(d: PanelDataset, opts: EstimatorOptions = EstimatorOptions(), controls: bool = False) -> TermSet:
    """Moment terms of a panel, with first-stage k chosen by leave-one-out for every pair (or cell)."""
    if controls:
        terms = build_terms_matched(d, k_grid=opts.k_grid)
    else:
        terms = build_terms(d, fit_all_pairs(d, opts.k_grid))
    if terms.is_empty:
        raise NumericalError("no usable moment terms were produced")
    return terms


def estimate_panel(d: PanelDataset,
                   opts: EstimatorOptions = EstimatorOptions()) -> typing.Tuple[EstimateResult, TermSet]:
    terms = panel_terms(d, opts)
    return estimate_beta(terms, opts), terms


def estimate_panel_matched(d: PanelDataset,
                           opts: EstimatorOptions = EstimatorOptions()) -> typing.Tuple[EstimateResult, TermSet]:
    """As estimate_panel, using only individuals whose control is unchanged within each pair."""
    terms = panel_terms(d, opts, controls=True)
    return estimate_beta(terms, opts), terms
