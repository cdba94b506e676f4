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
Minimisation of Q_n over the unit max-norm sphere.

The sphere {b : max_j |b_j| = 1} is the union of 2 d_x convex faces
{b : b_j = sign, |b_j'| <= 1 for j' != j}. Each face is solved as a convex problem
(projected subgradient descent by default, or an exact linear programme) and the best
face gives beta_tilde; beta_hat is its Euclidean normalisation.
"""

import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from joblib import Parallel, delayed
from scipy.optimize import linprog

from .errors import InvalidInputError, NumericalError
from .moments import TermSet, q_n, value_and_subgradient

logger = logging.getLogger(__name__)

UNIDENTIFIED_NOTE = "objective identically zero - parameter not identified from these terms"

RESULT_KEYS = ["beta_tilde", "beta_hat", "qn_value", "face_j", "face_sign", "iterations", "converged"]


@dataclass(frozen=True)
class EstimatorOptions:
    """
    Options shared by the optimiser, the first stage and the estimation pipeline

    Attributes:
        max_iter: iteration cap per descent run
        step_scale: c in the step length c / sqrt(iteration)
        stall_tol: improvement of the best value regarded as progress
        stall_window: iterations without progress after which a run has converged
        n_restarts: random starting points per face in addition to the origin
        seed: seed from which every face and restart derives its generator
        method: "subgradient" or "lp"
        n_jobs: parallel workers over faces (joblib), 1 runs sequentially
        k_grid: first-stage neighbour counts, None for the default grid
    """
    max_iter: int = 5000
    step_scale: float = 1.0
    stall_tol: float = 1e-10
    stall_window: int = 500
    n_restarts: int = 4
    seed: int = 0
    method: str = "subgradient"
    n_jobs: int = 1
    k_grid: typing.Optional[typing.Tuple[int, ...]] = None

    def __post_init__(self):
        if self.method not in ("subgradient", "lp"):
            raise InvalidInputError(f"unknown optimisation method {self.method!r}")
        if self.max_iter < 0 or self.n_restarts < 0:
            raise InvalidInputError("max_iter and n_restarts must be non-negative")


@dataclass(frozen=True)
class FaceProblem:
    """The face b_j = sign of the max-norm sphere; j is a 0-based coordinate index."""
    j: int
    sign: int
    d_x: int

    def __post_init__(self):
        if not 0 <= self.j < self.d_x or self.sign not in (1, -1):
            raise InvalidInputError(f"invalid face j={self.j} sign={self.sign} for d_x={self.d_x}")

    @property
    def free(self) -> np.ndarray:
        return np.array([i for i in range(self.d_x) if i != self.j], dtype=int)

    def point(self, x: np.ndarray) -> np.ndarray:
        b = np.empty(self.d_x)
        b[self.j] = float(self.sign)
        b[self.free] = x
        return b


@dataclass(frozen=True)
class FaceSolution:
    b: np.ndarray
    value: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class EstimateResult:
    beta_tilde: np.ndarray
    beta_hat: np.ndarray
    qn_value: float
    face: typing.Tuple[int, int]
    iterations: int
    converged: bool
    diagnostics: typing.Tuple[str, ...] = field(default_factory=tuple)

    @property
    def identified(self) -> bool:
        return UNIDENTIFIED_NOTE not in self.diagnostics


def all_faces(d_x: int) -> typing.List[FaceProblem]:
    """Faces in tie-breaking order: coordinate ascending, sign +1 before -1."""
    return [FaceProblem(j, sign, d_x) for j in range(d_x) for sign in (1, -1)]


def _normalised(terms: TermSet) -> TermSet:
    # Q_n is positively homogeneous: rescaling the terms leaves the minimiser unchanged
    largest = max((float(np.max(np.abs(g))) for g in terms.g_by_pair.values() if g.size), default=0.0)
    if largest == 0.0:
        return terms
    return terms.scaled(1.0 / largest)


def _descend(terms: TermSet, face: FaceProblem, x0: np.ndarray, opts: EstimatorOptions) -> FaceSolution:
    free = face.free
    x = np.clip(np.asarray(x0, dtype=float), -1.0, 1.0)
    b = face.point(x)
    value, sg = value_and_subgradient(b, terms)
    best_value, best_b = value, b
    last_progress = 0
    iteration = 0
    converged = False
    while iteration < opts.max_iter:
        direction = sg[free]
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            # zero subgradient on the free coordinates: b minimises the face
            converged = True
            break
        iteration += 1
        x = np.clip(x - (opts.step_scale / math.sqrt(iteration)) * direction / norm, -1.0, 1.0)
        b = face.point(x)
        value, sg = value_and_subgradient(b, terms)
        if value < best_value:
            if value < best_value - opts.stall_tol:
                last_progress = iteration
            best_value, best_b = value, b
        if iteration - last_progress >= opts.stall_window:
            converged = True
            break
    return FaceSolution(best_b, best_value, iteration, converged)


def _solve_face_lp(terms: TermSet, face: FaceProblem) -> FaceSolution:
    """
    Exact solution of a face as a linear programme

    Variables are the free coordinates x, one slack s_i >= max(-g_i'b, 0) per term and
    the epigraph variable z >= mean of the slacks of every pair; minimise z.
    """
    free = face.free
    blocks = [terms.g_by_pair[pair] for pair in terms.pairs if terms.g_by_pair[pair].shape[0] > 0]
    n_total = sum(g.shape[0] for g in blocks)
    n_free = free.shape[0]
    n_vars = n_free + n_total + 1

    G = np.concatenate(blocks, axis=0)
    # -g_free'x - s_i <= sign * g_ij
    hinge = scipy.sparse.hstack([
        scipy.sparse.csr_matrix(-G[:, free]),
        -scipy.sparse.identity(n_total, format="csr"),
        scipy.sparse.csr_matrix((n_total, 1)),
    ])
    hinge_rhs = face.sign * G[:, face.j]
    rows, cols, vals = [], [], []
    offset = 0
    for p, g in enumerate(blocks):
        count = g.shape[0]
        rows += [p] * count
        cols += list(range(n_free + offset, n_free + offset + count))
        vals += [1.0 / count] * count
        rows.append(p)
        cols.append(n_vars - 1)
        vals.append(-1.0)
        offset += count
    epigraph = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(len(blocks), n_vars))
    A_ub = scipy.sparse.vstack([hinge, epigraph], format="csr")
    b_ub = np.concatenate([hinge_rhs, np.zeros(len(blocks))])
    cost = np.zeros(n_vars)
    cost[-1] = 1.0
    bounds = [(-1.0, 1.0)] * n_free + [(0.0, None)] * (n_total + 1)
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.x is None:
        raise NumericalError(f"linear programme failed on face j={face.j} sign={face.sign}: {res.message}")
    b = face.point(np.clip(res.x[:n_free], -1.0, 1.0))
    return FaceSolution(b, q_n(b, terms), int(getattr(res, "nit", 0)), bool(res.status == 0))


def _face_generator(seed: int, face: FaceProblem) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(face.j, 0 if face.sign > 0 else 1)))


def minimize_face(terms: TermSet, face: FaceProblem, opts: EstimatorOptions = EstimatorOptions()) -> FaceSolution:
    """
    Minimise Q_n over one face of the max-norm sphere

    With the subgradient method, a run starts from the free coordinates at 0 and from
    opts.n_restarts seeded uniform points in the box; the best run is kept (the first
    one on ties). Each run returns its best iterate, since subgradient steps do not
    decrease the objective monotonically.

    Arguments:
        terms: moment terms
        face: the face to solve
        opts: optimiser options

    Returns:
        the best point found, its objective, the iteration count and convergence flag
    """
    if face.d_x != terms.d_x:
        raise InvalidInputError(f"face dimension {face.d_x} does not match terms d_x={terms.d_x}")
    work = _normalised(terms)
    if opts.method == "lp":
        solution = _solve_face_lp(work, face)
    else:
        rng = _face_generator(opts.seed, face)
        starts = [np.zeros(face.d_x - 1)]
        starts += [rng.uniform(-1.0, 1.0, size=face.d_x - 1) for _ in range(opts.n_restarts)]
        solution = None
        for x0 in starts:
            candidate = _descend(work, face, x0, opts)
            if solution is None or candidate.value < solution.value:
                solution = candidate
    return FaceSolution(solution.b, q_n(solution.b, terms), solution.iterations, solution.converged)


def estimate_beta(terms: TermSet, opts: EstimatorOptions = EstimatorOptions()) -> EstimateResult:
    """
    Minimise Q_n over all 2 d_x faces and normalise the minimiser

    Faces are reduced in a fixed order (coordinate ascending, sign +1 first) so that
    parallel and sequential runs give identical results.
    """
    if terms.is_empty:
        raise NumericalError("no moment terms to estimate from")
    faces = all_faces(terms.d_x)
    if opts.n_jobs != 1 and len(faces) > 1:
        solutions = Parallel(n_jobs=opts.n_jobs, prefer="threads")(
            delayed(minimize_face)(terms, face, opts) for face in faces)
    else:
        solutions = [minimize_face(terms, face, opts) for face in faces]

    best = 0
    for index, solution in enumerate(solutions):
        if solution.value < solutions[best].value:
            best = index
    face = faces[best]
    solution = solutions[best]
    beta_tilde = solution.b
    beta_hat = beta_tilde / np.linalg.norm(beta_tilde)

    diagnostics = []
    if terms.all_zero():
        diagnostics.append(UNIDENTIFIED_NOTE)
        logger.warning(UNIDENTIFIED_NOTE)
    if not solution.converged:
        diagnostics.append(f"face solver stopped at the iteration cap ({opts.max_iter}) before stalling")
    logger.info("beta_hat=%s Q_n=%.6g face=(%d, %+d)", np.array2string(beta_hat, precision=4),
                solution.value, face.j + 1, face.sign)
    return EstimateResult(beta_tilde=beta_tilde, beta_hat=beta_hat, qn_value=q_n(beta_tilde, terms),
                          face=(face.j, face.sign), iterations=solution.iterations,
                          converged=solution.converged, diagnostics=tuple(diagnostics))


def sphere_grid(d_x: int, resolution: int) -> np.ndarray:
    """Unit vectors on an angular grid: resolution angles for d_x = 2, a polar x azimuth grid for d_x = 3."""
    if d_x == 2:
        theta = 2.0 * np.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    polar = np.linspace(0.0, np.pi, max(resolution // 2, 1) + 1)
    azimuth = 2.0 * np.pi * np.arange(resolution) / resolution
    pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
    return np.stack([np.sin(pp) * np.cos(aa), np.sin(pp) * np.sin(aa), np.cos(pp)], axis=-1).reshape(-1, 3)


def grid_oracle(terms: TermSet, resolution: int, scale: str = "max") -> typing.Tuple[np.ndarray, float]:
    if terms.d_x not in (2, 3):
        raise InvalidInputError(f"grid_oracle supports d_x of 2 or 3, got {terms.d_x}")
    if resolution < 1:
        raise InvalidInputError("resolution must be positive")
    if terms.is_empty:
        raise InvalidInputError("the objective needs at least one moment term")
    directions = sphere_grid(terms.d_x, resolution)
    values = np.zeros(directions.shape[0])
    for pair in terms.pairs:
        g = terms.g_by_pair[pair]
        if g.shape[0] == 0:
            continue
        for start in range(0, directions.shape[0], 2048):
            chunk = directions[start:start + 2048]
            pair_value = np.mean(np.maximum(-(g @ chunk.T), 0.0), axis=0)
            values[start:start + 2048] = np.maximum(values[start:start + 2048], pair_value)
    if scale == "max":
        values = values / np.max(np.abs(directions), axis=1)
    elif scale != "euclidean":
        raise InvalidInputError(f"unknown scale {scale!r}")
    best = int(np.argmin(values))
    return directions[best], float(values[best])


def _format_vector(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def format_result(result: EstimateResult) -> str:
    """Key = value document holding the estimate; diagnostics become # comment lines."""
    lines = [
        f"beta_tilde = {_format_vector(result.beta_tilde)}",
        f"beta_hat = {_format_vector(result.beta_hat)}",
        f"qn_value = {float(result.qn_value)!r}",
        f"face_j = {result.face[0] + 1}",
        f"face_sign = {result.face[1]}",
        f"iterations = {result.iterations}",
        f"converged = {'true' if result.converged else 'false'}",
    ]
    lines += [f"# note: {note}" for note in result.diagnostics]
    return "\n".join(lines) + "\n"


def write_result(result: EstimateResult, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_result(result))


def parse_result(text: str) -> EstimateResult:
    values = {}
    notes = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("# note:"):
            notes.append(line[len("# note:"):].strip())
            continue
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    missing = [key for key in RESULT_KEYS if key not in values]
    if missing:
        raise InvalidInputError(f"result document is missing keys: {', '.join(missing)}")
    return EstimateResult(
        beta_tilde=np.array([float(x) for x in values["beta_tilde"].split()]),
        beta_hat=np.array([float(x) for x in values["beta_hat"].split()]),
        qn_value=float(values["qn_value"]),
        face=(int(values["face_j"]) - 1, int(values["face_sign"])),
        iterations=int(values["iterations"]),
        converged=values["converged"] == "true",
        diagnostics=tuple(notes))


def read_result(path) -> EstimateResult:
    with open(path, encoding="utf-8") as f:
        return parse_result(f.read())
