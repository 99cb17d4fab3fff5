"""Min-sum message pass, compiled when available.

The extension is picked at import; set ``AIRWAY_HMM_PURE_PYTHON=1`` to force
the numpy fallback. Both produce identical floats: the per-entry additions
happen in the same order and ties go to the lowest index.
"""

from __future__ import annotations

import os

import numpy as np


def minsum_pass_python(unary: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_frames, k = unary.shape
    messages = np.empty((n_frames, k), dtype=np.float64)
    argmins = np.full((n_frames, k), -1, dtype=np.int64)
    if n_frames == 0:
        return messages, argmins
    cols = np.arange(k)
    messages[0] = unary[0]
    for n in range(1, n_frames):
        tot = messages[n - 1][:, None] + trans
        arg = tot.argmin(axis=0)
        messages[n] = unary[n] + tot[arg, cols]
        argmins[n] = arg
    return messages, argmins


try:
    if os.environ.get("AIRWAY_HMM_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from ._minsum import minsum_pass as minsum_pass_compiled
except ImportError:
    minsum_pass_compiled = None

BACKEND = "cython" if minsum_pass_compiled is not None else "python"


def minsum_pass(unary: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward min-sum recursion over ``unary`` (N x K) with ``trans[prev, cur]``.

    Returns the message table and the argmin table (row 0 of the latter is -1).
    """
    unary = np.ascontiguousarray(unary, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    if minsum_pass_compiled is not None:
        return minsum_pass_compiled(unary, trans)
    return minsum_pass_python(unary, trans)
