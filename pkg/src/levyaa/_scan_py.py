"""Pure-Python fallback for the compiled recurrences in ``_scan.pyx``."""

import numpy as np


def exp_scan(decay, forcing, init):
    decay = np.asarray(decay, dtype=np.float64)
    forcing = np.asarray(forcing, dtype=np.float64)
    n, m = forcing.shape
    if decay.shape != (m,) or np.shape(init) != (m,):
        raise ValueError("decay/init length must match forcing columns")
    out = np.empty((n + 1, m))
    out[0] = init
    for k in range(n):
        out[k + 1] = decay * out[k] + forcing[k]
    return out


def exp_scan_batch(decay, forcing, init):
    decay = np.asarray(decay, dtype=np.float64)
    forcing = np.asarray(forcing, dtype=np.float64)
    p, n, m = forcing.shape
    if decay.shape != (m,) or np.shape(init) != (p, m):
        raise ValueError("decay/init shape must match forcing")
    out = np.empty((p, n + 1, m))
    out[:, 0] = init
    for k in range(n):
        out[:, k + 1] = decay * out[:, k] + forcing[:, k]
    return out
