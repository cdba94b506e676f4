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
Random utility primitives: logit choice probabilities, the social surplus function,
central-difference gradients and a cyclic monotonicity checker.

Utilities and probabilities cover the inside options 1..K only; option 0 has utility
zero and its probability is the residual 1 - sum(p).
"""

import logging
import typing
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)

DEFAULT_GRADIENT_STEP = 1e-5


def as_utility(u) -> np.ndarray:
    """Coerce u to a float array whose last axis holds K >= 1 finite utilities."""
    try:
        arr = np.asarray(u, dtype=float)
    except (TypeError, ValueError) as ex:
        raise InvalidInputError(f"utility vector is not numeric: {ex}") from ex
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] < 1:
        raise InvalidInputError("utility vector must have at least one inside option")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("utility vector contains non-finite values")
    return arr


def _log_denominator(u: np.ndarray) -> np.ndarray:
    # log(1 + sum_k exp(u_k)), the zero column being the outside option
    padded = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u], axis=-1)
    return logsumexp(padded, axis=-1)


def logit_ccp(u) -> np.ndarray:
    """exp(u_k) / (1 + sum exp(u)), option 0 at utility 0; u of shape (..., K)."""
    u = as_utility(u)
    return np.exp(u - _log_denominator(u)[..., np.newaxis])


def social_surplus_gumbel(u) -> float:
    """Closed form E max_k (u_k + e_k) under i.i.d. standard Gumbel shocks, u_0 = 0."""
    u = as_utility(u)
    if u.ndim != 1:
        raise InvalidInputError("social_surplus_gumbel expects a single utility vector")
    return EULER_GAMMA + float(_log_denominator(u))


ShockSampler = typing.Callable[[np.random.Generator, int, int], np.ndarray]


def gumbel_shocks(rng: np.random.Generator, n_draws: int, K: int) -> np.ndarray:
    """
    i.i.d. standard Gumbel shocks for all K+1 options.

    The first column is the outside-option shock.
    """
    return rng.gumbel(size=(n_draws, K + 1))


def gaussian_shocks(cov=None) -> ShockSampler:
    """Jointly normal shocks over the K+1 options, column 0 the outside option."""
    def sample(rng, n_draws, K):
        c = np.eye(K + 1) if cov is None else np.asarray(cov, dtype=float)
        if c.shape != (K + 1, K + 1):
            raise InvalidInputError(f"covariance must be {K + 1}x{K + 1}, got {c.shape}")
        return rng.multivariate_normal(np.zeros(K + 1), c, size=n_draws, method="cholesky")
    return sample


def uniform_shocks(low: float, high: float) -> ShockSampler:
    """Bounded-support shocks on the inside options only (the outside shock is implicitly 0)."""
    def sample(rng, n_draws, K):
        return rng.uniform(low, high, size=(n_draws, K))
    return sample


def social_surplus_mc(u, shock_sampler: ShockSampler, n_draws: int, seed) -> float:
    """Monte Carlo E[max_k u_k + eps_k] with u_0 = 0, from n_draws shocks."""
    u = as_utility(u)
    if u.ndim != 1:
        raise InvalidInputError("social_surplus_mc expects a single utility vector")
    if int(n_draws) < 1:
        raise InvalidInputError("n_draws must be a positive integer")
    K = u.shape[0]
    rng = np.random.default_rng(seed)
    shocks = np.asarray(shock_sampler(rng, int(n_draws), K), dtype=float)
    if shocks.shape == (n_draws, K):
        outside = np.zeros(n_draws)
        inside = shocks
    elif shocks.shape == (n_draws, K + 1):
        outside = shocks[:, 0]
        inside = shocks[:, 1:]
    else:
        raise InvalidInputError(f"shock sampler returned shape {shocks.shape}, "
                                f"expected ({n_draws}, {K}) or ({n_draws}, {K + 1})")
    best = np.maximum(outside, np.max(u + inside, axis=1))
    return float(np.mean(best))


def numeric_gradient(f: typing.Callable[[np.ndarray], float], u,
                     h: float = DEFAULT_GRADIENT_STEP) -> np.ndarray:
    """Central-difference gradient (f(u + h e_k) - f(u - h e_k)) / 2h for every coordinate."""
    if not h > 0:
        raise InvalidInputError("gradient step h must be positive")
    u = np.asarray(u, dtype=float).reshape(-1)
    grad = np.zeros(u.shape[0])
    for k in range(u.shape[0]):
        step = np.zeros(u.shape[0])
        step[k] = h
        grad[k] = (f(u + step) - f(u - step)) / (2 * h)
    return grad


@dataclass(frozen=True)
class Cycle:
    """
    An ordered list of M >= 2 points in R^K; the closing edge returns to points[0].
    """
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise InvalidInputError("cycle points must all share one dimension K")
        if pts.shape[0] < 2:
            raise InvalidInputError("a cycle needs at least two points")
        object.__setattr__(self, "points", pts)

    @property
    def length(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def _as_cycle(cycle) -> Cycle:
    if isinstance(cycle, Cycle):
        return cycle
    try:
        return Cycle(np.asarray(cycle, dtype=float))
    except ValueError as ex:
        # ragged point lists fail inside numpy
        raise InvalidInputError(f"cycle points must all share one dimension K: {ex}") from ex


def cyclic_monotonicity_residual(f: typing.Callable[[np.ndarray], np.ndarray], cycle) -> float:
    """
    Evaluate sum_m (u_m - u_{m+1})' f(u_m) with u_{M+1} = u_1

    f is cyclic monotone with respect to the cycle exactly when the result is >= 0.
    """
    c = _as_cycle(cycle)
    total = 0.0
    for m in range(c.length):
        here = c.points[m]
        following = c.points[(m + 1) % c.length]
        value = np.asarray(f(here), dtype=float).reshape(-1)
        if value.shape[0] != c.dimension:
            raise InvalidInputError(f"f returned dimension {value.shape[0]}, cycle has dimension {c.dimension}")
        total += float(np.dot(here - following, value))
    return total


def random_cycles(rng: np.random.Generator, count: int, K: int, min_length: int = 2,
                  max_length: int = 5, low: float = -5.0, high: float = 5.0) -> typing.List[Cycle]:
    cycles = []
    for _ in range(count):
        length = int(rng.integers(min_length, max_length + 1))
        cycles.append(Cycle(rng.uniform(low, high, size=(length, K))))
    return cycles
