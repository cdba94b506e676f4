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
Data-generating processes and the Monte Carlo harness.

The panel design draws X uniform on [0, 1], fixed effects A^k = (w^k + sum_j X^k_{j,1}) / 4
with w uniform on [0, 1], and errors e^k = A^k (u^k - u^0) with u jointly normal.
Replications use seeds spawned from the master seed, so replication r can be rerun on
its own.
"""

import dataclasses
import logging
import typing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .aggregate import AggregateDataset
from .choice_core import logit_ccp
from .errors import CyclicMonoError, InvalidInputError, NumericalError
from .estimation import estimate_panel, estimate_panel_matched
from .identset import DiscreteDGP
from .optimizer import EstimatorOptions
from .paneldata import PanelDataset

logger = logging.getLogger(__name__)

DEFAULT_BETA = (1.0, 0.5, 0.0)

# error correlation of (u^0, u^1, u^2)
DEFAULT_CORRELATION = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.5), (0.0, 0.5, 1.0))

FULL_STUDY_SIZES = (250, 500, 1000, 2000)
FULL_STUDY_REPS = 6000


def _correlation(corr, K: int) -> np.ndarray:
    if corr is None:
        corr = DEFAULT_CORRELATION if K == 2 else np.eye(K + 1)
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (K + 1, K + 1) or not np.allclose(corr, corr.T):
        raise InvalidInputError(f"error correlation must be a symmetric {K + 1}x{K + 1} matrix")
    try:
        np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise InvalidInputError("error correlation matrix is not positive definite")
    return corr


@dataclass(frozen=True)
class McDgpConfig:
    """
    The panel Monte Carlo design

    Attributes:
        n: individuals
        T, K, d_x: periods, inside options, covariates per option
        beta: true parameter
        corr: correlation of (u^0, ..., u^K), None for the default
        seed: data seed
        fixed_effects: whether A enters the utility
        heteroskedastic: whether the errors are scaled by A
        control_shift: when non-zero, a binary control Z_it = 1{X^1_{1,it} + v > 1}
            (v uniform on [0, 1]) adds control_shift to the option 1 utility and is
            recorded in the panel
    """
    n: int
    T: int = 2
    K: int = 2
    d_x: int = 3
    beta: typing.Tuple[float, ...] = DEFAULT_BETA
    corr: typing.Optional[typing.Tuple[typing.Tuple[float, ...], ...]] = None
    seed: int = 0
    fixed_effects: bool = True
    heteroskedastic: bool = True
    control_shift: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.T < 1 or self.K < 1 or self.d_x < 1:
            raise InvalidInputError("n, T, K and d_x must be positive")
        if len(self.beta) != self.d_x:
            raise InvalidInputError(f"beta must have length {self.d_x}")
        _correlation(self.corr, self.K)

    @property
    def truth(self) -> np.ndarray:
        beta = np.asarray(self.beta, dtype=float)
        return beta / np.linalg.norm(beta)

    @property
    def has_controls(self) -> bool:
        return self.control_shift != 0.0


def _choose(v: np.ndarray) -> np.ndarray:
    # option 0 has utility 0
    best = np.argmax(v, axis=-1)
    return np.where(np.max(v, axis=-1) > 0.0, best + 1, 0)


@dataclass(frozen=True)
class PanelDraws:
    """A simulated panel with its fixed effects A (n, K) and errors eps (n, T, K)."""
    panel: PanelDataset
    A: np.ndarray
    eps: np.ndarray


def draw_panel(cfg: McDgpConfig) -> PanelDraws:
    rng = np.random.default_rng(cfg.seed)
    n, T, K, d_x = cfg.n, cfg.T, cfg.K, cfg.d_x
    X = rng.uniform(size=(n, T, K, d_x))
    omega = rng.uniform(size=(n, K))
    A = (omega + X[:, 0].sum(axis=-1)) / 4.0
    L = np.linalg.cholesky(_correlation(cfg.corr, K))
    u = rng.standard_normal(size=(n, T, K + 1)) @ L.T
    eps = u[..., 1:] - u[..., :1]
    if cfg.heteroskedastic:
        eps = A[:, np.newaxis, :] * eps
    v = X @ np.asarray(cfg.beta, dtype=float) + eps
    if cfg.fixed_effects:
        v = v + A[:, np.newaxis, :]
    Z = None
    if cfg.has_controls:
        Z = (X[:, :, 0, 0] + rng.uniform(size=(n, T)) > 1.0).astype(np.int64)
        v[..., 0] += cfg.control_shift * Z
    return PanelDraws(PanelDataset(X, _choose(v), Z), A, eps)


def simulate_panel(cfg: McDgpConfig) -> PanelDataset:
    return draw_panel(cfg).panel


def simulate_discrete_panel(dgp: DiscreteDGP, n: int, seed: int, T: int = 2) -> PanelDataset:
    """Individuals from a discrete-support design: support draws, a mixture component each, Gumbel errors."""
    if n < 1 or T < 1:
        raise InvalidInputError("n and T must be positive")
    rng = np.random.default_rng(seed)
    X = dgp.draw_covariates(rng, (n, T))
    weights = np.array([component.weight for component in dgp.mixture])
    which = rng.choice(len(dgp.mixture), size=n, p=weights / weights.sum())
    A = np.zeros((n, dgp.K))
    for index, component in enumerate(dgp.mixture):
        rows = which == index
        A[rows] = component.effects(X[rows, 0])
    shocks = rng.gumbel(size=(n, T, dgp.K + 1))
    v = X @ dgp.beta + A[:, np.newaxis, :] + shocks[..., 1:] - shocks[..., :1]
    return PanelDataset(X, _choose(v))


@dataclass(frozen=True)
class AggregateDgpConfig:
    """
    Markets with logit shares at X'beta + A_c, A_c built as in the panel design

    consumers=None gives exact shares; otherwise every market-period draws a
    multinomial sample of that many consumers.
    """
    C: int
    T: int = 2
    K: int = 2
    d_x: int = 3
    beta: typing.Tuple[float, ...] = DEFAULT_BETA
    consumers: typing.Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.C < 1 or self.T < 1 or self.K < 1 or self.d_x < 1:
            raise InvalidInputError("C, T, K and d_x must be positive")
        if len(self.beta) != self.d_x:
            raise InvalidInputError(f"beta must have length {self.d_x}")
        if self.consumers is not None and self.consumers < 1:
            raise InvalidInputError("consumers must be positive")

    @property
    def truth(self) -> np.ndarray:
        beta = np.asarray(self.beta, dtype=float)
        return beta / np.linalg.norm(beta)


def simulate_aggregate(cfg: AggregateDgpConfig) -> AggregateDataset:
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(size=(cfg.C, cfg.T, cfg.K, cfg.d_x))
    A = (rng.uniform(size=(cfg.C, cfg.K)) + X[:, 0].sum(axis=-1)) / 4.0
    p = logit_ccp(X @ np.asarray(cfg.beta, dtype=float) + A[:, np.newaxis, :])
    if cfg.consumers is None:
        return AggregateDataset(X, p)
    full = np.concatenate([np.clip(1.0 - p.sum(axis=-1, keepdims=True), 0.0, 1.0), p], axis=-1)
    full = full / full.sum(axis=-1, keepdims=True)
    counts = rng.multinomial(cfg.consumers, full)
    n_ct = np.full((cfg.C, cfg.T), cfg.consumers, dtype=np.int64)
    return AggregateDataset(X, counts[..., 1:] / cfg.consumers, n_ct)


def replication_seed(master_seed: int, rep: int) -> int:
    """Seed of replication rep, spawned from the master seed."""
    return int(np.random.SeedSequence(master_seed, spawn_key=(rep,)).generate_state(1)[0])


def run_replication(cfg: McDgpConfig, rep: int, opts: EstimatorOptions,
                    matched: bool = False) -> typing.Optional[np.ndarray]:
    """beta_hat of one replication, or None when estimation failed or is degenerate."""
    d = simulate_panel(dataclasses.replace(cfg, seed=replication_seed(cfg.seed, rep)))
    try:
        result, _ = estimate_panel_matched(d, opts) if matched else estimate_panel(d, opts)
    except CyclicMonoError as ex:
        logger.warning("replication %d failed: %s", rep, ex)
        return None
    if not result.identified:
        logger.warning("replication %d has a degenerate objective", rep)
        return None
    return result.beta_hat


@dataclass(frozen=True)
class McTable:
    """
    Bias, standard deviation and root mean squared error of beta_hat per coordinate,
    against beta / ||beta||_2; SD uses divisor n_reps so that rmse^2 = bias^2 + sd^2
    """
    bias: np.ndarray
    sd: np.ndarray
    rmse: np.ndarray
    n: int
    reps: int
    seed: int
    n_failed: int = 0
    estimates: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @staticmethod
    def from_estimates(estimates: np.ndarray, truth: np.ndarray, n: int, seed: int, n_failed: int = 0) -> "McTable":
        estimates = np.asarray(estimates, dtype=float)
        if estimates.shape[0] < 2:
            raise NumericalError(f"only {estimates.shape[0]} successful replications; at least 2 are needed")
        errors = estimates - truth
        bias = errors.mean(axis=0)
        sd = estimates.std(axis=0, ddof=0)
        rmse = np.sqrt(np.mean(errors ** 2, axis=0))
        return McTable(bias, sd, rmse, n, estimates.shape[0] + n_failed, seed, n_failed, estimates)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "coordinate": [f"beta_{j + 1}" for j in range(self.bias.shape[0])],
            "BIAS": self.bias, "SD": self.sd, "rMSE": self.rmse,
        })


def run_monte_carlo(cfg: McDgpConfig, n_reps: int, opts: EstimatorOptions = EstimatorOptions(),
                    n_jobs: int = 1, matched: bool = False) -> McTable:
    """
    Simulate, estimate and summarise n_reps replications

    Arguments:
        cfg: the design; cfg.seed is the master seed
        n_reps: replications, at least 2
        opts: estimator options used inside every replication
        n_jobs: parallel replications (joblib)
        matched: estimate with control matching

    Returns:
        the summary table; failed replications are excluded and counted
    """
    if n_reps < 2:
        raise InvalidInputError("n_reps must be at least 2")
    rep_opts = dataclasses.replace(opts, n_jobs=1)
    if n_jobs != 1:
        outcomes = Parallel(n_jobs=n_jobs)(
            delayed(run_replication)(cfg, rep, rep_opts, matched) for rep in range(n_reps))
    else:
        outcomes = [run_replication(cfg, rep, rep_opts, matched) for rep in range(n_reps)]
    estimates = [beta for beta in outcomes if beta is not None]
    n_failed = n_reps - len(estimates)
    if n_failed:
        logger.warning("%d of %d replications failed and were excluded", n_failed, n_reps)
    table = McTable.from_estimates(np.array(estimates).reshape(len(estimates), cfg.d_x), cfg.truth,
                                   cfg.n, cfg.seed, n_failed)
    logger.info("n=%d reps=%d: bias=%s sd=%s", cfg.n, n_reps, np.array2string(table.bias, precision=4),
                np.array2string(table.sd, precision=4))
    return table


def run_study(sizes: typing.Sequence[int], n_reps: int, cfg: McDgpConfig,
              opts: EstimatorOptions = EstimatorOptions(), n_jobs: int = 1,
              matched: bool = False) -> typing.List[McTable]:
    return [run_monte_carlo(dataclasses.replace(cfg, n=n), n_reps, opts, n_jobs, matched) for n in sizes]


def tables_frame(tables: typing.Sequence[McTable]) -> pd.DataFrame:
    """One row per (n, coordinate)."""
    frames = []
    for table in tables:
        frame = table.to_frame()
        frame.insert(0, "n", table.n)
        frame["reps"] = table.reps
        frame["failed"] = table.n_failed
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def write_tables_csv(tables: typing.Sequence[McTable], path):
    tables_frame(tables).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def render_tables(tables: typing.Sequence[McTable]) -> str:
    """An aligned text table, one row per sample size and BIAS/SD/rMSE under every coordinate."""
    d_x = tables[0].bias.shape[0]
    width = 3 * 9
    header = " " * 7 + "".join(f"{'beta_' + str(j + 1):^{width}}" for j in range(d_x))
    sub = f"{'n':>6} " + "".join(f"{'BIAS':>9}{'SD':>9}{'rMSE':>9}" for _ in range(d_x))
    lines = [header, sub]
    for table in tables:
        cells = "".join(f"{table.bias[j]:9.4f}{table.sd[j]:9.4f}{table.rmse[j]:9.4f}" for j in range(d_x))
        lines.append(f"{table.n:>6} " + cells)
    reps = sorted({table.reps for table in tables})
    failed = sum(table.n_failed for table in tables)
    lines.append(f"({', '.join(str(r) for r in reps)} repetitions, {failed} failed)")
    return "\n".join(lines) + "\n"
