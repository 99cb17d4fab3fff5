"""Choosing the regularization weight on held-out sequences.

Two routes: an exhaustive grid and a scalar descent on the mean marginal NLL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .inference import Boundary, CostModel, apply_boundary, data_term, marginals, validate_likelihoods, viterbi_decode
from .tree import AirwayTree, distance_matrix, regularization_matrix

NLL_EPS = 1e-12
DEFAULT_LAMBDA = 22.43
DEFAULT_GRID = (0.0, 60.0, 240)


class TuningError(ValueError):
    pass


@dataclass
class TuningProblem:
    """Labelled sequences plus the search interval for the weight.

    The grid is ``samples`` evenly spaced points from ``lo`` to ``hi`` inclusive.
    """

    sequences: Sequence[tuple[np.ndarray, np.ndarray]]
    tree: AirwayTree
    lo: float = DEFAULT_GRID[0]
    hi: float = DEFAULT_GRID[1]
    samples: int = DEFAULT_GRID[2]
    boundary: Boundary = "both"
    hard_boundary: bool = True
    _data: list[np.ndarray] = field(init=False, repr=False)
    _truth: list[np.ndarray] = field(init=False, repr=False)
    _reg: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.sequences:
            raise TuningError("tuning needs at least one sequence")
        if not (self.lo >= 0 and self.hi > self.lo):
            raise TuningError(f"invalid interval [{self.lo}, {self.hi}]")
        if self.samples < 2:
            raise TuningError("grid needs at least two samples")
        self._data, self._truth = [], []
        for i, (p, y) in enumerate(self.sequences):
            p = validate_likelihoods(p)
            y = np.asarray(y, dtype=np.int64)
            if p.shape[1] != self.tree.size:
                raise TuningError(f"sequence {i}: {p.shape[1]} columns for {self.tree.size} labels")
            if y.shape != (p.shape[0],):
                raise TuningError(f"sequence {i}: truth length {y.shape[0]} != {p.shape[0]} frames")
            self._data.append(apply_boundary(data_term(p), self.tree.root, self.boundary))
            self._truth.append(y)
        self._reg = regularization_matrix(distance_matrix(self.tree))
        # both terms must share a comparable scale for the weight to be meaningful
        assert all(d.min() >= 0 and d.max() <= 1 for d in self._data)
        assert self._reg.min() >= 1 and self._reg.max() <= np.e * (1 + 1e-12)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.samples)

    def cost_models(self, lam: float):
        for data in self._data:
            yield CostModel(data, self._reg, lam, self.boundary, self.hard_boundary)


@dataclass
class TuningResult:
    lambda_gd: float | None = None
    lambda_bf: float | None = None
    nll_curve: np.ndarray | None = None  # (samples, 2): lambda, mean NLL
    acc_curve: np.ndarray | None = None  # (samples, 2): lambda, mean Acc@1
    iterations: int = 0
    nll_gd: float | None = None
    nll_bf: float | None = None

    def to_dict(self) -> dict:
        return {
            "lambda_gd": self.lambda_gd,
            "lambda_bf": self.lambda_bf,
            "nll_gd": self.nll_gd,
            "nll_bf": self.nll_bf,
            "iterations": self.iterations,
            "samples": None if self.nll_curve is None else int(len(self.nll_curve)),
        }


def sequence_nll(marginal: np.ndarray, truth: np.ndarray) -> float:
    p_true = marginal[np.arange(len(truth)), truth]
    return float(-np.mean(np.log(np.maximum(p_true, NLL_EPS))))


def tuning_objective(lam: float, problem: TuningProblem) -> float:
    """Mean marginal NLL of the true labels: per-sequence frame mean, then across sequences."""
    if not lam >= 0:
        raise TuningError(f"lambda must be >= 0, got {lam}")
    vals = [sequence_nll(marginals(c).marginals, y) for c, y in zip(problem.cost_models(lam), problem._truth)]
    return float(np.mean(vals))


def map_accuracy(lam: float, problem: TuningProblem) -> float:
    """Mean Acc@1 of the MAP path across sequences."""
    accs = [np.mean(viterbi_decode(c).path == y) for c, y in zip(problem.cost_models(lam), problem._truth)]
    return float(np.mean(accs))


def brute_force_lambda(problem: TuningProblem) -> TuningResult:
    """Evaluate every grid point; the smallest weight wins ties."""
    grid = problem.grid
    nll = np.empty(len(grid))
    acc = np.empty(len(grid))
    for i, lam in enumerate(grid):
        vals, accs = [], []
        for c, y in zip(problem.cost_models(lam), problem._truth):
            res = marginals(c)
            vals.append(sequence_nll(res.marginals, y))
            accs.append(np.mean(res.path == y))
        nll[i], acc[i] = np.mean(vals), np.mean(accs)
    best = int(np.argmin(nll))
    return TuningResult(
        lambda_bf=float(grid[best]),
        nll_bf=float(nll[best]),
        nll_curve=np.column_stack([grid, nll]),
        acc_curve=np.column_stack([grid, acc]),
    )


def _derivative(f, lam: float) -> float:
    h = 1e-3 * max(1.0, lam)
    if lam - h < 0:
        # one-sided at the clamp: the weight cannot go negative
        return (f(lam + h) - f(lam)) / h
    return (f(lam + h) - f(lam - h)) / (2 * h)


def gradient_descent_lambda(problem: TuningProblem, init: float = 1.0, tol: float = 1e-3,
                            max_iter: int = 100, max_step: float = 8.0) -> TuningResult:
    """Scalar descent on the objective with the weight parameterized as ``relu(theta)``.

    Derivatives are central finite differences; steps follow a secant estimate
    of the curvature when it is positive and a capped gradient step otherwise,
    with step halving until the objective does not increase. Stops when the
    weight moves less than ``tol`` or after ``max_iter`` iterations.
    """
    if not init >= 0:
        raise TuningError("init must be >= 0")
    cache: dict[float, float] = {}

    def f(lam: float) -> float:
        if lam not in cache:
            cache[lam] = tuning_objective(lam, problem)
        return cache[lam]

    theta = float(init)
    lam = max(theta, 0.0)
    f_cur = f(lam)
    if not np.isfinite(f_cur):
        raise TuningError(f"objective is not finite at init={init}")
    g = _derivative(f, lam)
    prev: tuple[float, float] | None = None
    it = 0
    for it in range(1, max_iter + 1):
        if prev is not None and theta != prev[0] and (g - prev[1]) / (theta - prev[0]) > 0:
            step = -g * (theta - prev[0]) / (g - prev[1])
        else:
            step = -g
        step = float(np.clip(step, -max_step, max_step))
        accepted = False
        for _ in range(30):
            theta_new = theta + step
            lam_new = max(theta_new, 0.0)
            if abs(lam_new - lam) < tol:
                break
            f_new = f(lam_new)
            if f_new <= f_cur:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        prev = (theta, g)
        theta, lam, f_cur = theta_new, lam_new, f_new
        if theta <= 0:
            # ReLU flat region: the parameter receives no further gradient
            break
        g = _derivative(f, lam)
    return TuningResult(lambda_gd=lam, nll_gd=f_cur, iterations=it)


def tune(problem: TuningProblem, method: str = "both", init: float = 1.0) -> TuningResult:
    if method not in ("grid", "gd", "both"):
        raise TuningError(f"unknown tuning method {method!r}")
    result = brute_force_lambda(problem) if method in ("grid", "both") else TuningResult()
    if method in ("gd", "both"):
        gd = gradient_descent_lambda(problem, init)
        result.lambda_gd, result.nll_gd, result.iterations = gd.lambda_gd, gd.nll_gd, gd.iterations
    return result
