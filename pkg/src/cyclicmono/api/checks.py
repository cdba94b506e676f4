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
Self-checks of the numerical building blocks.

Each check draws its own seeded inputs and returns a CheckResult; run_checks runs the
battery and the command line exits non-zero if anything fails. The objective is looked
up through the moments module at call time.
"""

import logging
import time
import typing
from dataclasses import dataclass

import numpy as np

from . import moments
from .choice_core import (cyclic_monotonicity_residual, logit_ccp, numeric_gradient, random_cycles,
                          social_surplus_gumbel)
from .optimizer import EstimatorOptions, estimate_beta, grid_oracle

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-6
CYCLE_TOL = 1e-12
CONVEXITY_SLACK = 1e-10
HOMOGENEITY_TOL = 1e-12
ORACLE_SLACK = 1e-2


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def __str__(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def random_terms(rng: np.random.Generator, d_x: int, n: int = 60, n_pairs: int = 1) -> moments.TermSet:
    """Terms scattered around a random direction so that the objective is not trivially zero."""
    direction = rng.standard_normal(d_x)
    by_pair = {}
    for p in range(n_pairs):
        g = rng.standard_normal((n, d_x)) + 0.5 * direction
        by_pair[(1, p + 2)] = g
    return moments.TermSet.from_arrays(by_pair, d_x)


def check_gradient_identity(rng: np.random.Generator, count: int = 100) -> CheckResult:
    worst = 0.0
    for _ in range(count):
        K = int(rng.integers(1, 4))
        u = rng.uniform(-5.0, 5.0, size=K)
        error = np.max(np.abs(numeric_gradient(social_surplus_gumbel, u) - logit_ccp(u)))
        worst = max(worst, float(error))
    return CheckResult("gradient identity", worst < GRADIENT_TOL,
                       f"max |numeric gradient - logit_ccp| = {worst:.3g} over {count} points")


def check_cyclic_monotonicity(rng: np.random.Generator, count: int = 1000) -> CheckResult:
    worst = np.inf
    for _ in range(count):
        K = int(rng.integers(1, 4))
        cycle = random_cycles(rng, 1, K)[0]
        worst = min(worst, cyclic_monotonicity_residual(logit_ccp, cycle))
    return CheckResult("cyclic monotonicity", worst >= -CYCLE_TOL,
                       f"smallest residual {worst:.3g} over {count} cycles")


def check_objective_shape(rng: np.random.Generator, count: int = 200) -> CheckResult:
    """Convexity on random triples, non-negativity and positive homogeneity of Q_n."""
    failures = []
    for _ in range(count):
        d_x = int(rng.integers(2, 5))
        terms = random_terms(rng, d_x, n=30, n_pairs=int(rng.integers(1, 3)))
        b1 = rng.standard_normal(d_x)
        b2 = rng.standard_normal(d_x)
        lam = float(rng.uniform())
        q1 = moments.q_n(b1, terms)
        q2 = moments.q_n(b2, terms)
        mixed = moments.q_n(lam * b1 + (1.0 - lam) * b2, terms)
        if mixed > lam * q1 + (1.0 - lam) * q2 + CONVEXITY_SLACK:
            failures.append("convexity")
        if q1 < 0.0:
            failures.append("non-negativity")
        for scale in (0.5, 2.0):
            if abs(moments.q_n(scale * b1, terms) - scale * q1) > HOMOGENEITY_TOL * max(1.0, abs(q1)):
                failures.append("homogeneity")
    detail = f"{count} triples" if not failures else f"{len(failures)} violations ({', '.join(sorted(set(failures)))})"
    return CheckResult("objective convexity and homogeneity", not failures, detail)


def check_solver_against_oracle(rng: np.random.Generator, count: int = 20, resolution: int = 360,
                                dims: typing.Sequence[int] = (2, 3), method: str = "subgradient") -> CheckResult:
    worst = -np.inf
    opts = EstimatorOptions(seed=int(rng.integers(2 ** 31)), method=method)
    for _ in range(count):
        d_x = int(rng.choice(dims))
        terms = random_terms(rng, d_x, n=40, n_pairs=int(rng.integers(1, 3)))
        result = estimate_beta(terms, opts)
        _, oracle = grid_oracle(terms, resolution if d_x == 2 else resolution // 3)
        worst = max(worst, result.qn_value - oracle)
    return CheckResult(f"solver ({method}) versus grid oracle", worst <= ORACLE_SLACK,
                       f"largest excess over the oracle {worst:.3g} on {count} term sets")


def run_checks(quick: bool = False, seed: int = 0) -> typing.List[CheckResult]:
    plan = [
        (check_gradient_identity, {"count": 20 if quick else 100}),
        (check_cyclic_monotonicity, {"count": 200 if quick else 1000}),
        (check_objective_shape, {"count": 50 if quick else 200}),
    ]
    if quick:
        plan.append((check_solver_against_oracle, {"count": 3, "dims": (2,), "method": "lp"}))
    else:
        plan.append((check_solver_against_oracle, {"count": 20}))
    results = []
    for index, (check, kwargs) in enumerate(plan):
        rng = np.random.default_rng([seed, index])
        start = time.perf_counter()
        result = check(rng, **kwargs)
        result = CheckResult(result.name, result.passed, result.detail, time.perf_counter() - start)
        (logger.info if result.passed else logger.error)(str(result))
        results.append(result)
    return results
