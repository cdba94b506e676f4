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
Population-level identified set computation for discrete-support designs.

Covariate tuples are drawn from the support, the exact conditional choice
probabilities are obtained by enumerating the fixed-effect mixture, and every drawn
tuple yields an element g of the inequality-generating set. A parameter b belongs to
the (outer approximation of the) identified set when b'g >= -tol for every drawn g.
"""

import logging
import typing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .choice_core import logit_ccp
from .errors import InvalidInputError
from .raster import save_membership_image

logger = logging.getLogger(__name__)

MEMBER_TOL = 1e-10

# rows drawn per seeded chunk; budgets sharing a seed are nested
SAMPLE_CHUNK = 4096


@dataclass(frozen=True)
class MixtureComponent:
    """
    One point of the fixed-effect distribution

    A^k = intercept[k] + sum over (k', j) of loading[k, k', j] * x_first[k', j], where
    x_first holds the first-period covariates.
    """
    weight: float
    intercept: np.ndarray
    loading: np.ndarray

    def effects(self, x_first: np.ndarray) -> np.ndarray:
        return np.asarray(self.intercept) + np.einsum("akj,...kj->...a", self.loading, x_first)


@dataclass(frozen=True)
class DiscreteDGP:
    """
    A panel design with finitely supported covariates and Gumbel errors

    Attributes:
        K: inside options
        d_x: covariates per option
        support: for every covariate coordinate j the finite set of values it takes
            (shared by all options and periods)
        mixture: the fixed-effect distribution
        beta: the true parameter
        error_law: only "gumbel" (type-I extreme value, logit probabilities)
    """
    K: int
    d_x: int
    support: typing.Tuple[np.ndarray, ...]
    mixture: typing.Tuple[MixtureComponent, ...]
    beta: np.ndarray
    error_law: str = "gumbel"

    def __post_init__(self):
        support = tuple(np.asarray(values, dtype=float) for values in self.support)
        if len(support) != self.d_x or any(values.size == 0 for values in support):
            raise InvalidInputError("support needs a non-empty value set for every covariate coordinate")
        if any(not np.all(np.isfinite(values)) for values in support):
            raise InvalidInputError("support values must be finite")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.beta.shape != (self.d_x,):
            raise InvalidInputError(f"beta must have length {self.d_x}")
        total = sum(component.weight for component in self.mixture)
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"mixture weights sum to {total}, not 1")
        if self.error_law != "gumbel":
            raise InvalidInputError(f"unsupported error law {self.error_law!r}")

    def in_support(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != (self.K, self.d_x):
            return False
        for j, values in enumerate(self.support):
            if not np.all(np.min(np.abs(x[..., j][..., np.newaxis] - values), axis=-1) <= 1e-12):
                return False
        return True

    def draw_covariates(self, rng: np.random.Generator, size: typing.Tuple[int, ...]) -> np.ndarray:
        """Covariates drawn uniformly from the support product, shape size + (K, d_x)."""
        x = np.empty(tuple(size) + (self.K, self.d_x))
        for j, values in enumerate(self.support):
            x[..., j] = values[rng.integers(values.size, size=tuple(size) + (self.K,))]
        return x


def degenerate_mixture(K: int, d_x: int) -> typing.Tuple[MixtureComponent, ...]:
    return (MixtureComponent(1.0, np.zeros(K), np.zeros((K, K, d_x))),)


def illustration_dgp(s: int) -> DiscreteDGP:
    """
    Trinary choice, two periods, three covariates each supported on {1, 1/2, ..., 1/s},
    beta = (1, 1, 1), A^1 = w1 * x^1_1 and A^2 = w2 * x^1_3 in the first period with
    w1 in {1, 2} and w2 in {0, -1} independent and equally likely
    """
    if s < 1:
        raise InvalidInputError("s must be at least 1")
    values = 1.0 / np.arange(1, s + 1)
    components = []
    for w1 in (1.0, 2.0):
        for w2 in (0.0, -1.0):
            loading = np.zeros((2, 2, 3))
            loading[0, 0, 0] = w1
            loading[1, 0, 2] = w2
            components.append(MixtureComponent(0.25, np.zeros(2), loading))
    return DiscreteDGP(K=2, d_x=3, support=(values, values, values), mixture=tuple(components),
                       beta=np.array([1.0, 1.0, 1.0]))


def bounded_finite_dgp(points: int = 11) -> DiscreteDGP:
    """
    Binary choice where covariate 1 is finite-valued ({0, 1}) and covariates 2 and 3 are
    bounded (points values in [0, 1]), with beta = (1, 0.5, 0). Since beta_2 / beta_1 is
    below the smallest negative change of covariate 1 over the largest change of
    covariate 2, the cone of inequality directions is not a half-space and the
    identified set is not a single point.
    """
    bounded = np.linspace(0.0, 1.0, points)
    mixture = (MixtureComponent(0.5, np.array([0.5]), np.zeros((1, 1, 3))),
               MixtureComponent(0.5, np.array([-0.5]), np.zeros((1, 1, 3))))
    return DiscreteDGP(K=1, d_x=3, support=(np.array([0.0, 1.0]), bounded, bounded), mixture=mixture,
                       beta=np.array([1.0, 0.5, 0.0]))


def cycle_ccps(dgp: DiscreteDGP, xs: np.ndarray) -> np.ndarray:
    """Exact E[Y_m | x_1..x_M], shape (..., M, K), for xs of shape (..., M, K, d_x)."""
    xs = np.asarray(xs, dtype=float)
    v = xs @ dgp.beta
    p = np.zeros(v.shape)
    for component in dgp.mixture:
        a = component.effects(xs[..., 0, :, :])
        p += component.weight * logit_ccp(v + a[..., np.newaxis, :])
    return p


def true_cycle_ccp(dgp: DiscreteDGP, xs, period: int) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 3 or not dgp.in_support(xs):
        raise InvalidInputError("covariates must be (M, K, d_x) points of the declared support")
    if not 1 <= period <= xs.shape[0]:
        raise InvalidInputError(f"period must lie in 1..{xs.shape[0]}")
    return cycle_ccps(dgp, xs)[period - 1]


def true_pair_ccp(dgp: DiscreteDGP, x1, x2, period: int) -> np.ndarray:
    """E[Y_period | X_1 = x1, X_2 = x2] averaged over the fixed-effect mixture."""
    return true_cycle_ccp(dgp, np.stack([np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)]), period)


def cycle_terms(dgp: DiscreteDGP, xs: np.ndarray) -> np.ndarray:
    """g = sum_m (x_m - x_{m+1})' E[Y_m | x_1..x_M] for covariates of shape (N, M, K, d_x)."""
    p = cycle_ccps(dgp, xs)
    diffs = xs - np.roll(xs, -1, axis=-3)
    return np.einsum("nmkj,nmk->nj", diffs, p)


@dataclass(frozen=True)
class GSample:
    gs: np.ndarray
    meta: typing.Dict[str, typing.Any] = field(default_factory=dict)

    def __post_init__(self):
        gs = np.asarray(self.gs, dtype=float)
        if gs.ndim == 1:
            gs = gs.reshape(0, 0) if gs.size == 0 else gs.reshape(1, -1)
        if not np.all(np.isfinite(gs)):
            raise InvalidInputError("g samples must be finite")
        object.__setattr__(self, "gs", gs)

    @property
    def size(self) -> int:
        return self.gs.shape[0]

    def union(self, other: "GSample") -> "GSample":
        if self.size == 0:
            return other
        if other.size == 0:
            return self
        meta = dict(self.meta)
        meta["n_pairs"] = self.size + other.size
        return GSample(np.concatenate([self.gs, other.gs], axis=0), meta)


def sample_g_set(dgp: DiscreteDGP, n_pairs: int, seed: int, cycle_length: int = 2) -> GSample:
    """
    Draw covariate tuples uniformly from the support and compute their g vectors

    Draws come in seeded chunks, so the sample for a smaller budget is a prefix of the
    sample for a larger budget with the same seed.
    """
    if n_pairs < 1:
        raise InvalidInputError("n_pairs must be at least 1")
    if cycle_length < 2:
        raise InvalidInputError("cycles need at least two periods")
    pieces = []
    remaining = n_pairs
    chunk = 0
    while remaining > 0:
        size = min(SAMPLE_CHUNK, remaining)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
        xs = dgp.draw_covariates(rng, (SAMPLE_CHUNK, cycle_length))[:size]
        pieces.append(cycle_terms(dgp, xs))
        remaining -= size
        chunk += 1
    gs = np.concatenate(pieces, axis=0)
    meta = {"n_pairs": n_pairs, "seed": seed, "cycle_length": cycle_length,
            "support_sizes": [values.size for values in dgp.support]}
    logger.debug("sampled %d g vectors (cycle length %d, seed %d)", n_pairs, cycle_length, seed)
    return GSample(gs, meta)


@dataclass(frozen=True)
class GridAxis:
    """Grid over coordinate index (0-based) of b: steps evenly spaced values from lower to upper."""
    index: int
    lower: float
    upper: float
    steps: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.steps)

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.steps - 1) if self.steps > 1 else 0.0


def default_axes(lower: float = 0.5, upper: float = 1.9, steps: int = 99) -> typing.Tuple[GridAxis, GridAxis]:
    """Axes over (beta_2, beta_3) with beta_1 = 1; 99 steps place 1.0 on a grid node."""
    return GridAxis(1, lower, upper, steps), GridAxis(2, lower, upper, steps)


@dataclass(frozen=True)
class IdSetGrid:
    """
    Membership of grid nodes in the identified set

    Attributes:
        axes: the free coordinates and their grids
        fixed: values of the remaining coordinates (by default b_1 = 1)
        member: boolean array with one dimension per axis (axis order, "ij" indexing)
        margin: min over g of b'g at every node
    """
    axes: typing.Tuple[GridAxis, ...]
    fixed: typing.Dict[int, float]
    member: np.ndarray
    margin: np.ndarray

    @property
    def cell_area(self) -> float:
        return float(np.prod([axis.spacing for axis in self.axes]))

    @property
    def member_count(self) -> int:
        return int(np.sum(self.member))

    @property
    def area(self) -> float:
        return self.member_count * self.cell_area

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*[axis.values() for axis in self.axes], indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def contains(self, point: typing.Sequence[float]) -> bool:
        """Membership of the node nearest to a point given in axis order."""
        index = []
        for axis, value in zip(self.axes, point):
            values = axis.values()
            index.append(int(np.argmin(np.abs(values - value))))
        return bool(self.member[tuple(index)])

    def to_frame(self) -> pd.DataFrame:
        nodes = self.nodes()
        data = {f"beta_{axis.index + 1}": nodes[:, a] for (a, axis) in enumerate(self.axes)}
        data["member"] = self.member.reshape(-1).astype(int)
        return pd.DataFrame(data)

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")

    def write_bitmap(self, path):
        if len(self.axes) != 2:
            raise InvalidInputError("bitmaps need exactly two grid axes")
        save_membership_image(self.member, path)


def scan_identified_set(gs: GSample, axes: typing.Optional[typing.Sequence[GridAxis]] = None,
                        fixed: typing.Optional[typing.Dict[int, float]] = None,
                        tol: float = MEMBER_TOL) -> IdSetGrid:
    """
    Mark grid nodes b satisfying b'g >= -tol for every sampled g

    Arguments:
        gs: sampled inequality directions
        axes: free coordinates and grids; defaults to (beta_2, beta_3) on [0.5, 1.9]
        fixed: values of the coordinates not on an axis; defaults to {0: 1.0}
        tol: slack absorbing floating point noise

    Returns:
        the membership grid
    """
    axes = tuple(axes) if axes is not None else default_axes()
    fixed = dict(fixed) if fixed is not None else {0: 1.0}
    if not axes or any(axis.steps < 1 for axis in axes):
        raise InvalidInputError("the grid must have at least one node on every axis")
    d_x = len(axes) + len(fixed)
    covered = sorted([axis.index for axis in axes] + list(fixed))
    if covered != list(range(d_x)):
        raise InvalidInputError("axes and fixed coordinates must cover every coordinate exactly once")
    if gs.size > 0 and gs.gs.shape[1] != d_x:
        raise InvalidInputError(f"g samples have dimension {gs.gs.shape[1]}, grid has {d_x}")

    shape = tuple(axis.steps for axis in axes)
    grid = IdSetGrid(axes, fixed, np.ones(shape, dtype=bool), np.full(shape, np.inf))
    if gs.size == 0:
        return grid

    nodes = grid.nodes()
    b = np.empty((nodes.shape[0], d_x))
    for a, axis in enumerate(axes):
        b[:, axis.index] = nodes[:, a]
    for index, value in fixed.items():
        b[:, index] = value
    directions = np.unique(gs.gs, axis=0)
    margin = np.full(nodes.shape[0], np.inf)
    for start in range(0, b.shape[0], 2048):
        block = b[start:start + 2048]
        for g_start in range(0, directions.shape[0], 4096):
            products = block @ directions[g_start:g_start + 4096].T
            margin[start:start + 2048] = np.minimum(margin[start:start + 2048], np.min(products, axis=1))
    member = (margin >= -tol).reshape(shape)
    logger.info("identified set scan: %d of %d nodes are members", int(np.sum(member)), member.size)
    return IdSetGrid(axes, fixed, member, margin.reshape(shape))


def singleton_diagnostic(grid: IdSetGrid, tol_cells: typing.Optional[int] = None) -> bool:
    """
    Whether the member set is (numerically) a single point

    With tol_cells, true when there are at least one and at most tol_cells members.
    Otherwise true when all members lie within one grid step of a single node.
    """
    count = grid.member_count
    if count == 0:
        logger.warning("identified set scan has no member nodes")
        return False
    if tol_cells is not None:
        return count <= tol_cells
    indices = np.argwhere(grid.member)
    spread = indices.max(axis=0) - indices.min(axis=0)
    return bool(np.all(spread <= 2))


def nested_support_scan(s_values: typing.Sequence[int], n_pairs: int, seed: int,
                        axes: typing.Optional[typing.Sequence[GridAxis]] = None,
                        cycle_length: int = 2,
                        dgp_factory: typing.Callable[[int], DiscreteDGP] = illustration_dgp
                        ) -> typing.Dict[int, IdSetGrid]:
    """
    Identified sets for growing supports s_1 < s_2 < ...

    Supports are nested, so every g drawn for a smaller support is also an element of
    the inequality set of a larger one; the samples are accumulated, which makes the
    member sets nested.
    """
    grids = {}
    accumulated = GSample(np.zeros((0, 0)))
    for s in sorted(s_values):
        sample = sample_g_set(dgp_factory(s), n_pairs, seed + s, cycle_length)
        accumulated = accumulated.union(sample)
        grids[s] = scan_identified_set(accumulated, axes)
        logger.info("s=%d: %d member nodes, area %.4f", s, grids[s].member_count, grids[s].area)
    return grids
