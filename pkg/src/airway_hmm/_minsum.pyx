# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled min-sum message pass."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def minsum_pass(const double[:, ::1] unary, const double[:, ::1] trans):
    """m[n, j] = unary[n, j] + min_i (m[n-1, i] + trans[i, j]); lowest i wins ties."""
    cdef Py_ssize_t n_frames = unary.shape[0]
    cdef Py_ssize_t k = unary.shape[1]
    cdef Py_ssize_t n, i, j, best_i
    cdef double best, cand

    messages = np.empty((n_frames, k), dtype=np.float64)
    argmins = np.full((n_frames, k), -1, dtype=np.int64)
    cdef double[:, ::1] m = messages
    cdef cnp.int64_t[:, ::1] arg = argmins

    if n_frames == 0:
        return messages, argmins
    for j in range(k):
        m[0, j] = unary[0, j]
    for n in range(1, n_frames):
        for j in range(k):
            best = m[n - 1, 0] + trans[0, j]
            best_i = 0
            for i in range(1, k):
                cand = m[n - 1, i] + trans[i, j]
                if cand < best:
                    best = cand
                    best_i = i
            m[n, j] = unary[n, j] + best
            arg[n, j] = best_i
    return messages, argmins
