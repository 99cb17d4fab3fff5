"""Energy construction, min-sum Viterbi decoding and per-frame marginals.

Costs stay in cost space (lower is better) throughout; probabilities appear
only when marginal rows are emitted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from ._kernels import minsum_pass
from .tree import AirwayTree, distance_matrix, regularization_matrix

Boundary = Literal["both", "start", "none"]
BOUNDARY_POLICIES: tuple[str, ...] = ("both", "start", "none")
ROW_SUM_TOL = 1e-9


class InferenceError(ValueError):
    pass


def validate_likelihoods(p: np.ndarray, min_frames: int = 2) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise InferenceError(f"likelihoods must be an N x K matrix, got shape {p.shape}")
    if p.shape[0] < min_frames:
        raise InferenceError(f"need at least {min_frames} frames, got {p.shape[0]}")
    if p.shape[1] < 2:
        raise InferenceError("need at least two classes")
    if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
        raise InferenceError("likelihood entries must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise InferenceError(f"row {bad[0]} does not sum to 1 (sum={p[bad[0]].sum():.12g})")
    return p


def data_term(p: np.ndarray) -> np.ndarray:
    """Unary cost ``(1 - p) / (K - 1)``; each row then sums to exactly 1."""
    p = np.asarray(p, dtype=np.float64)
    k = p.shape[-1]
    if k < 2:
        raise InferenceError("data term needs at least two classes")
    return (1.0 - p) / (k - 1)


def boundary_row(k: int, root: int) -> np.ndarray:
    """Data term of a one-hot likelihood at ``root``."""
    onehot = np.zeros(k)
    onehot[root] = 1.0
    return data_term(onehot)


def apply_boundary(data: np.ndarray, root: int, policy: Boundary = "both") -> np.ndarray:
    """Pin the first (and, for ``"both"``, last) frame to the root label."""
    if policy not in BOUNDARY_POLICIES:
        raise InferenceError(f"unknown boundary policy {policy!r}")
    data = np.array(data, dtype=np.float64)
    n, k = data.shape
    if n < 2:
        raise InferenceError("boundary handling needs at least two frames")
    if not 0 <= root < k:
        raise InferenceError(f"root index {root} out of range for {k} classes")
    if policy == "none":
        return data
    row = boundary_row(k, root)
    data[0] = row
    if policy == "both":
        data[-1] = row
    return data


@dataclass(frozen=True)
class CostModel:
    """Unary costs (boundary rows already applied), pairwise penalty and its weight.

    The pairwise cost between consecutive frames is ``lambda_r * reg[cur, prev]``.
    With ``hard_boundary`` the active boundary frames are pinned to the class
    whose boundary cost is zero: every other class gets infinite cost there
    (see ``unary``), while ``data`` itself stays in [0, 1].
    """

    data: np.ndarray
    reg: np.ndarray
    lambda_r: float
    boundary: Boundary = "none"
    hard_boundary: bool = True

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        reg = np.ascontiguousarray(self.reg, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "reg", reg)
        object.__setattr__(self, "lambda_r", float(self.lambda_r))
        if data.ndim != 2 or data.shape[0] < 2:
            raise InferenceError("cost model needs an N x K data term with N >= 2")
        if not np.all(np.isfinite(data)):
            raise InferenceError("data term must be finite")
        if reg.shape != (data.shape[1], data.shape[1]):
            raise InferenceError(f"regularizer shape {reg.shape} does not match {data.shape[1]} classes")
        if not np.isfinite(self.lambda_r) or self.lambda_r < 0:
            raise InferenceError(f"lambda_r must be finite and >= 0, got {self.lambda_r}")
        if self.boundary not in BOUNDARY_POLICIES:
            raise InferenceError(f"unknown boundary policy {self.boundary!r}")
        for r in self.boundary_rows:
            if np.count_nonzero(data[r] == 0.0) != 1:
                raise InferenceError("active boundary rows must have exactly one zero-cost class")
        unary = data
        if self.hard_boundary and self.boundary_rows:
            unary = data.copy()
            for r in self.boundary_rows:
                unary[r, data[r] != 0.0] = np.inf
        object.__setattr__(self, "_unary", unary)

    @classmethod
    def from_likelihoods(
        cls,
        p: np.ndarray,
        tree: AirwayTree,
        lambda_r: float,
        boundary: Boundary = "both",
        hard_boundary: bool = True,
        reg: np.ndarray | None = None,
    ) -> "CostModel":
        p = validate_likelihoods(p)
        if p.shape[1] != tree.size:
            raise InferenceError(f"likelihoods have {p.shape[1]} columns, tree has {tree.size} labels")
        if reg is None:
            reg = regularization_matrix(distance_matrix(tree))
        data = apply_boundary(data_term(p), tree.root, boundary)
        return cls(data=data, reg=reg, lambda_r=lambda_r, boundary=boundary, hard_boundary=hard_boundary)

    @property
    def boundary_rows(self) -> tuple[int, ...]:
        n = self.data.shape[0]
        return {"both": (0, n - 1), "start": (0,), "none": ()}[self.boundary]

    @property
    def unary(self) -> np.ndarray:
        """Per-frame costs the decoder minimizes (``data`` plus boundary pins)."""
        return self._unary

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_classes(self) -> int:
        return self.data.shape[1]

    def reversed(self) -> "CostModel":
        """Time-reversed model; the pairwise term is transposed to keep energies equal."""
        boundary = {"both": "both", "none": "none"}.get(self.boundary)
        if boundary is None:
            raise InferenceError("a start-only boundary has no time-reversed counterpart")
        return CostModel(self.data[::-1].copy(), self.reg.T.copy(), self.lambda_r, boundary, self.hard_boundary)


@dataclass(frozen=True)
class DecodeResult:
    path: np.ndarray
    total_cost: float
    forward: np.ndarray | None = None
    backward: np.ndarray | None = None
    marginals: np.ndarray | None = None
    #: best-path-through-node cost ``m_f + m_b - data`` per frame and class
    combined: np.ndarray | None = None


def path_energy(cost: CostModel, path: np.ndarray) -> float:
    """Total energy: unary costs plus weighted pairwise penalties of a label path."""
    path = np.asarray(path, dtype=np.int64)
    unary = cost.unary[np.arange(cost.n_frames), path].sum()
    pair = cost.reg[path[1:], path[:-1]].sum()
    return float(unary + cost.lambda_r * pair)


def _forward(cost: CostModel) -> tuple[np.ndarray, np.ndarray]:
    # trans[prev, cur] = lambda * R(cur, prev)
    return minsum_pass(cost.unary, cost.lambda_r * cost.reg.T)


def _backward(cost: CostModel) -> np.ndarray:
    # walking right to left, "prev" is frame n+1: trans[next, cur] = lambda * R(next, cur)
    msgs, _ = minsum_pass(cost.unary[::-1], cost.lambda_r * cost.reg)
    return msgs[::-1].copy()


def _backtrack(messages: np.ndarray, argmins: np.ndarray) -> np.ndarray:
    n = messages.shape[0]
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmin(messages[-1]))
    for t in range(n - 1, 0, -1):
        path[t - 1] = argmins[t, path[t]]
    return path


def viterbi_decode(cost: CostModel) -> DecodeResult:
    """Minimum-energy label path by min-sum dynamic programming."""
    fwd, arg = _forward(cost)
    path = _backtrack(fwd, arg)
    return DecodeResult(path=path, total_cost=float(fwd[-1].min()), forward=fwd)


def cost_to_probability(c: np.ndarray) -> np.ndarray:
    """Row-wise softmax of negated costs, shifted by the row minimum."""
    c = np.asarray(c, dtype=np.float64)
    e = np.exp(-(c - c.min(axis=-1, keepdims=True)))
    return e / e.sum(axis=-1, keepdims=True)


def marginals(cost: CostModel) -> DecodeResult:
    """Approximate per-frame posteriors from a forward and a backward Viterbi pass.

    The unary cost of frame n is counted by both passes and is subtracted once.
    The MAP path and its cost are returned alongside. Classes excluded by a
    hard boundary keep an infinite combined cost and zero probability.
    """
    fwd, arg = _forward(cost)
    bwd = _backward(cost)
    path = _backtrack(fwd, arg)
    unary = cost.unary
    finite = np.isfinite(unary)
    combined = np.where(finite, fwd + bwd - np.where(finite, unary, 0.0), np.inf)
    return DecodeResult(
        path=path,
        total_cost=float(fwd[-1].min()),
        forward=fwd,
        backward=bwd,
        marginals=cost_to_probability(combined),
        combined=combined,
    )


def hmm_parameters(cost: CostModel) -> tuple[np.ndarray, np.ndarray]:
    """Log transition matrix ``[prev, cur]`` and log emission rows for the sum-product reading."""
    log_trans = -cost.lambda_r * cost.reg.T
    log_trans = log_trans - logsumexp(log_trans, axis=1, keepdims=True)
    log_emit = -cost.unary - logsumexp(-cost.unary, axis=1, keepdims=True)
    return log_trans, log_emit


def exact_posteriors(cost: CostModel) -> np.ndarray:
    """Sum-product forward-backward posteriors in log space (uniform initial state).

    Serves as a reference for how far the min-sum marginals drift from the
    exact posteriors of a probabilistic reading of the same energy.
    """
    log_trans, log_emit = hmm_parameters(cost)
    n, k = log_emit.shape
    alpha = np.empty((n, k))
    beta = np.zeros((n, k))
    alpha[0] = log_emit[0] - np.log(k)
    for t in range(1, n):
        alpha[t] = log_emit[t] + logsumexp(alpha[t - 1][:, None] + log_trans, axis=0)
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(log_trans + (log_emit[t + 1] + beta[t + 1])[None, :], axis=1)
    log_post = alpha + beta
    return np.exp(log_post - logsumexp(log_post, axis=1, keepdims=True))
