# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled first-order linear recurrences used by the solver and checker."""

import numpy as np
cimport numpy as cnp


def exp_scan(double[::1] decay, double[:, ::1] forcing, double[::1] init):
    """out[0] = init, out[k+1] = decay * out[k] + forcing[k] (columnwise)."""
    cdef Py_ssize_t n = forcing.shape[0]
    cdef Py_ssize_t m = forcing.shape[1]
    cdef Py_ssize_t k, j
    if decay.shape[0] != m or init.shape[0] != m:
        raise ValueError("decay/init length must match forcing columns")
    out_arr = np.empty((n + 1, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for j in range(m):
        out[0, j] = init[j]
    for k in range(n):
        for j in range(m):
            out[k + 1, j] = decay[j] * out[k, j] + forcing[k, j]
    return out_arr


def exp_scan_batch(double[::1] decay, double[:, :, ::1] forcing, double[:, ::1] init):
    """Batched exp_scan over a leading path axis: forcing (p, n, m) -> (p, n+1, m)."""
    cdef Py_ssize_t p = forcing.shape[0]
    cdef Py_ssize_t n = forcing.shape[1]
    cdef Py_ssize_t m = forcing.shape[2]
    cdef Py_ssize_t i, k, j
    if decay.shape[0] != m or init.shape[0] != p or init.shape[1] != m:
        raise ValueError("decay/init shape must match forcing")
    out_arr = np.empty((p, n + 1, m), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for i in range(p):
        for j in range(m):
            out[i, 0, j] = init[i, j]
        for k in range(n):
            for j in range(m):
                out[i, k + 1, j] = decay[j] * out[i, k, j] + forcing[i, k, j]
    return out_arr
