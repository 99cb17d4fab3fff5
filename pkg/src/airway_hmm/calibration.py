"""Temperature scaling of classifier logits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

PROB_EPS = 1e-12
DEFAULT_BINS = 15
_LOG_T_BOUNDS = (-3.0, 3.0)
_LOG_T_TOL = 1e-6
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationReport:
    t_star: float
    nll_before: float
    nll_after: float
    ece_before: float
    ece_after: float
    flat: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _check_finite(z: np.ndarray) -> None:
    if not np.all(np.isfinite(z)):
        raise CalibrationError("logits contain non-finite values")


def scaled_softmax(z: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Softmax of ``z / t`` along the last axis, max-shifted for overflow safety."""
    if not t > 0:
        raise CalibrationError(f"temperature must be positive, got {t}")
    z = np.asarray(z, dtype=np.float64)
    _check_finite(z)
    s = z / t
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def logits_from_probabilities(p: np.ndarray, eps: float = PROB_EPS) -> np.ndarray:
    """Recover logits up to a per-row constant, which softmax ignores."""
    return np.log(np.asarray(p, dtype=np.float64) + eps)


def nll(z: np.ndarray, y: np.ndarray, t: float = 1.0) -> float:
    """Mean negative log-likelihood of labels ``y`` under ``softmax(z / t)``."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    s = z / t
    s = s - s.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(s).sum(axis=1))
    return float(np.mean(log_norm - s[np.arange(len(y)), y]))


def expected_calibration_error(p: np.ndarray, y: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Equal-width confidence-binned ECE.

    Bins are right-closed, ``(k/bins, (k+1)/bins]``; confidence 0 joins the first bin.
    """
    if bins < 1:
        raise CalibrationError("bins must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise CalibrationError("ECE needs a non-empty probability matrix")
    conf = p.max(axis=1)
    correct = (p.argmax(axis=1) == y).astype(np.float64)
    idx = np.clip(np.ceil(conf * bins).astype(np.int64) - 1, 0, bins - 1)
    ece = 0.0
    n = len(conf)
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        if count:
            ece += count / n * abs(correct[mask].mean() - conf[mask].mean())
    return float(ece)


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_temperature(z: np.ndarray, y: np.ndarray, bins: int = DEFAULT_BINS) -> CalibrationReport:
    """Fit a single temperature by minimizing the mean NLL.

    Golden-section search over ``log T`` in ``[-3, 3]``. The result is never
    worse than the starting point ``T = 1``; rows with no spread in their
    logits leave the NLL flat in ``T`` and yield ``T = 1`` with ``flat=True``.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise CalibrationError("logits must be a non-empty N x K matrix")
    if y.shape != (z.shape[0],):
        raise CalibrationError(f"expected {z.shape[0]} labels, got {y.shape[0]}")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise CalibrationError("label index out of range")
    _check_finite(z)

    nll_before = nll(z, y, 1.0)
    ece_before = expected_calibration_error(scaled_softmax(z, 1.0), y, bins)
    if np.all(np.ptp(z, axis=1) == 0):
        return CalibrationReport(1.0, nll_before, nll_before, ece_before, ece_before, flat=True)

    log_t = _golden_section(lambda u: nll(z, y, math.exp(u)), *_LOG_T_BOUNDS, _LOG_T_TOL)
    t_star = math.exp(log_t)
    nll_after = nll(z, y, t_star)
    if nll_after > nll_before:
        t_star, nll_after = 1.0, nll_before
    ece_after = expected_calibration_error(scaled_softmax(z, t_star), y, bins)
    return CalibrationReport(t_star, nll_before, nll_after, ece_before, ece_after)
